//! Spatial grounding: relevance maps for the target and anchor concepts,
//! candidate regions fused across views by instance features, and a
//! geometric check of the requested relation.

mod candidate;
mod graph;
mod regions;
mod relation;
mod relevance;

use log::debug;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::embed::{cosine, ConceptEmbedding, QueryContext, Vocabulary, DEFAULT_CANONICALS};
use crate::field::{FeatureField, SupervisionTriplet};
use crate::geom::Aabb;
use crate::parse::{Instruction, Relation};
use crate::real::{lit, Real};
use crate::scene::Scene;

pub use candidate::{
    make_candidate, merge, pixel_instance_feature, split_region, trimmed_bounds, Candidate, CandidateError,
    MergedCandidate, AABB_TRIM,
};
pub use graph::{build_graph, connected_components, InstanceGraph, UnionFind};
pub use regions::{connected_regions, extract_regions, Region, MIN_PIXELS};
pub use relation::{check_relation, footprint_overlap, horizontal_distance, RelationParams};
pub use relevance::{relevance, relevance_map, RelevanceMap, ViewCache};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundConfig {
    /// Relevance threshold for candidate regions.
    pub tau: f64,
    pub min_pixels: usize,
    /// Regions whose peak relevance, on the logit scale, falls below this
    /// fraction of the best peak for the concept across all views are
    /// dropped. Zero keeps everything above `tau`.
    pub relative_floor: f64,
    /// Instance-graph edge threshold; `None` means half the contrastive margin.
    pub epsilon: Option<f64>,
    pub lambda_in: f64,
    pub relation: RelationParams,
    pub use_instance_graph: bool,
    /// Split each relevance region into parts with consistent instance
    /// features before lifting candidates, so a region spilling across
    /// touching objects yields one candidate per object.
    pub split_regions: bool,
    /// Query candidate instance features at the finest pyramid level rather
    /// than at the concept's selected scale. Coarse cells straddle touching
    /// objects (a keyboard resting on a crate), which then become
    /// indistinguishable in the graph.
    pub finest_instance_level: bool,
    /// View whose camera frame defines left/right/front/behind; defaults
    /// to the first camera.
    pub frame_view: Option<u32>,
    pub canonicals: Vec<String>,
}

impl Default for GroundConfig {
    fn default() -> Self {
        Self {
            tau: 0.55,
            min_pixels: MIN_PIXELS,
            relative_floor: 0.7,
            epsilon: None,
            lambda_in: 1.0,
            relation: RelationParams::default(),
            use_instance_graph: true,
            split_regions: true,
            finest_instance_level: true,
            frame_view: None,
            canonicals: DEFAULT_CANONICALS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl GroundConfig {
    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or(0.5 * self.lambda_in)
    }

    pub fn validate(&self) -> Result<(), GroundError> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(GroundError::InvalidConfig("tau must lie in (0, 1)".into()));
        }
        if !(self.epsilon() > 0.0) {
            return Err(GroundError::InvalidConfig("epsilon must be positive".into()));
        }
        if self.canonicals.is_empty() {
            return Err(GroundError::InvalidConfig("need at least one canonical phrase".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum GroundError {
    #[error("no candidate found for anchor '{0}'")]
    AnchorNotFound(String),
    #[error("no candidate found for target '{0}'")]
    TargetNotFound(String),
    #[error("scene has no cameras")]
    NoViews,
    #[error("no supervision to select a scale from")]
    NoSupervision,
    #[error("frame view {0} does not exist")]
    UnknownFrame(u32),
    #[error("invalid grounding config: {0}")]
    InvalidConfig(String),
}

/// Relevance a region peak must reach: `rho` times the best peak across
/// `maps`, measured on the logit scale where 0.5 (no preference) is zero.
pub fn relative_floor<T: Real>(maps: &[RelevanceMap<T>], rho: T) -> T {
    let best = maps.iter().map(RelevanceMap::peak).fold(T::zero(), |a, b| a.max(b));
    let half: T = lit(0.5);
    if best <= half || rho <= T::zero() {
        return T::zero();
    }
    let logit = (best / (T::one() - best)).ln() * rho;
    T::one() / (T::one() + (-logit).exp())
}

/// Scale of the triplet whose embedding best matches `query`; ties go to
/// the smaller scale.
pub fn select_scale<T: Real>(triplets: &[SupervisionTriplet<T>], query: &ConceptEmbedding<T>) -> Option<T> {
    let mut best: Option<(T, T)> = None;
    for t in triplets {
        let c = cosine(&t.embedding, query);
        best = match best {
            Some((bc, bs)) if c < bc || (c == bc && t.scale >= bs) => Some((bc, bs)),
            _ => Some((c, t.scale)),
        };
    }
    best.map(|(_, s)| s)
}

/// Maps, candidates and merged instances for one concept.
#[derive(Debug, Clone)]
pub struct ConceptSearch<T> {
    pub scale: T,
    pub maps: Vec<RelevanceMap<T>>,
    pub candidates: Vec<Candidate<T>>,
    pub merged: Vec<MergedCandidate<T>>,
    /// Regions dropped because their peak had no depth.
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct ViewPeak<T> {
    pub view_id: u32,
    /// Highest-relevance pixel within the selected target in this view.
    pub argmax_pixel: Option<(u32, u32)>,
    pub peak_relevance: T,
}

#[derive(Debug, Clone)]
pub struct GroundingResult<T> {
    pub query_id: String,
    pub instruction: Instruction,
    pub target: MergedCandidate<T>,
    pub anchor: MergedCandidate<T>,
    pub satisfied: bool,
    pub frame_view_id: u32,
    pub per_view: Vec<ViewPeak<T>>,
    pub target_maps: Vec<RelevanceMap<T>>,
    pub anchor_maps: Vec<RelevanceMap<T>>,
}

fn aabb_json<T: Real>(b: &Aabb<T>) -> serde_json::Value {
    let v = |p: crate::geom::Vec3<T>| p.cast::<f64>().to_array();
    json!([v(b.min), v(b.max)])
}

impl<T: Real> GroundingResult<T> {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "query_id": self.query_id,
            "instruction": self.instruction,
            "satisfied": self.satisfied,
            "target_aabb": aabb_json(&self.target.aabb3d),
            "anchor_aabb": aabb_json(&self.anchor.aabb3d),
            "frame_view_id": self.frame_view_id,
            "per_view": self.per_view.iter().map(|p| json!({
                "view_id": p.view_id,
                "argmax_pixel": p.argmax_pixel.map(|(u, v)| [u, v]),
                "peak_relevance": p.peak_relevance.to_f64_lossy(),
            })).collect::<Vec<_>>(),
        })
    }

    pub fn target_map(&self, view_id: u32) -> Option<&RelevanceMap<T>> {
        self.target_maps.iter().find(|m| m.view_id == view_id)
    }

    pub fn view_peak(&self, view_id: u32) -> Option<&ViewPeak<T>> {
        self.per_view.iter().find(|p| p.view_id == view_id)
    }
}

/// A trained scene ready to answer queries; caches per-view ray samples.
pub struct Grounder<'a, T> {
    pub scene: &'a Scene<T>,
    pub field: &'a FeatureField<T>,
    pub supervision: &'a [SupervisionTriplet<T>],
    pub vocab: &'a Vocabulary,
    pub config: GroundConfig,
    pub views: Vec<ViewCache<T>>,
}

impl<'a, T: Real> Grounder<'a, T> {
    pub fn new(
        scene: &'a Scene<T>,
        field: &'a FeatureField<T>,
        supervision: &'a [SupervisionTriplet<T>],
        vocab: &'a Vocabulary,
        config: GroundConfig,
    ) -> Result<Self, GroundError> {
        config.validate()?;
        if scene.cameras.is_empty() {
            return Err(GroundError::NoViews);
        }
        if supervision.is_empty() {
            return Err(GroundError::NoSupervision);
        }
        if let Some(f) = config.frame_view {
            scene.camera(f).ok_or(GroundError::UnknownFrame(f))?;
        }
        let views = scene
            .cameras
            .iter()
            .map(|c| ViewCache::new(scene, &field.sampler, c))
            .collect();
        Ok(Self {
            scene,
            field,
            supervision,
            vocab,
            config,
            views,
        })
    }

    pub fn context(&self, token: &str) -> QueryContext<T> {
        QueryContext::for_token(self.vocab, token, &self.config.canonicals)
    }

    /// Relevance maps, candidates and merged instances for one concept.
    pub fn search(&self, token: &str) -> ConceptSearch<T> {
        let ctx = self.context(token);
        let scale = select_scale(self.supervision, &ctx.query).expect("supervision is nonempty");
        let tau: T = lit(self.config.tau);
        let epsilon: T = lit(self.config.epsilon());
        let level = if self.config.finest_instance_level {
            self.field.instance.levels.len() - 1
        } else {
            self.field.instance.level_for_scale(scale)
        };
        let maps: Vec<RelevanceMap<T>> = self.views.iter().map(|v| v.relevance_map(self.field, &ctx, scale)).collect();
        let floor = relative_floor(&maps, lit(self.config.relative_floor));
        let mut candidates = Vec::new();
        let mut rejected = 0;
        for (view, map) in self.views.iter().zip(&maps) {
            let mut regions = extract_regions(map, tau, self.config.min_pixels);
            if self.config.split_regions {
                regions = regions
                    .iter()
                    .flat_map(|r| split_region(r, map, view, self.scene, self.field, epsilon, self.config.min_pixels))
                    .collect();
            }
            regions.retain(|r| r.pixels.iter().any(|&(u, v)| map.get(u as usize, v as usize) >= floor));
            for region in regions {
                match make_candidate(&region, map, view, self.scene, self.field, level) {
                    Ok(c) => candidates.push(c),
                    Err(e) => {
                        debug!("{token}: {e}");
                        rejected += 1;
                    }
                }
            }
        }
        let components = if self.config.use_instance_graph {
            let features: Vec<Vec<T>> = candidates.iter().map(|c| c.feature.clone()).collect();
            connected_components(&build_graph(&features, epsilon))
        } else {
            (0..candidates.len()).map(|i| vec![i]).collect()
        };
        let merged = merge(&components, &candidates, &self.views);
        ConceptSearch {
            scale,
            maps,
            candidates,
            merged,
            rejected,
        }
    }

    pub fn ground(&self, query_id: &str, instruction: &Instruction) -> Result<GroundingResult<T>, GroundError> {
        let frame_id = self.config.frame_view.unwrap_or(self.scene.cameras[0].view_id);
        let frame = self.scene.camera(frame_id).ok_or(GroundError::UnknownFrame(frame_id))?;
        let anchors = self.search(&instruction.anchor);
        if anchors.merged.is_empty() {
            return Err(GroundError::AnchorNotFound(instruction.anchor.clone()));
        }
        let targets = self.search(&instruction.target);
        if targets.merged.is_empty() {
            return Err(GroundError::TargetNotFound(instruction.target.clone()));
        }
        let (ti, ai, satisfied) = select(&targets.merged, &anchors.merged, instruction.relation, frame, &self.config.relation);
        let target = targets.merged[ti].clone();
        let per_view = targets
            .maps
            .iter()
            .map(|map| {
                let mut best: Option<((u32, u32), T)> = None;
                if let Some(mask) = target.mask(map.view_id) {
                    // silhouette pixels mix in whatever lies behind; prefer the interior
                    let inner = mask.interior();
                    let mask = if inner.is_empty() { mask } else { &inner };
                    for (u, v) in mask.pixels() {
                        let r = map.get(u, v);
                        if best.is_none_or(|(_, b)| r > b) {
                            best = Some(((u as u32, v as u32), r));
                        }
                    }
                }
                ViewPeak {
                    view_id: map.view_id,
                    argmax_pixel: best.map(|b| b.0),
                    peak_relevance: best.map_or(T::zero(), |b| b.1),
                }
            })
            .collect();
        Ok(GroundingResult {
            query_id: query_id.to_owned(),
            instruction: instruction.clone(),
            target,
            anchor: anchors.merged[ai].clone(),
            satisfied,
            frame_view_id: frame_id,
            per_view,
            target_maps: targets.maps,
            anchor_maps: anchors.maps,
        })
    }
}

fn by_relevance<T: Real>(items: &[MergedCandidate<T>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|a, b| {
        items[*b]
            .mean_relevance
            .partial_cmp(&items[*a].mean_relevance)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

/// True when `a` and `b` cover mostly the same pixels in some view, i.e.
/// they are the same thing and cannot stand in a relation to each other.
fn same_support<T: Real>(a: &MergedCandidate<T>, b: &MergedCandidate<T>) -> bool {
    a.masks.iter().any(|(view, ma)| {
        b.masks.get(view).is_some_and(|mb| {
            let shared = ma.intersection_count(mb);
            let smaller = ma.count().min(mb.count());
            smaller > 0 && 2 * shared >= smaller
        })
    })
}

/// Picks `(target, anchor, satisfied)`.
///
/// Near and Far rank every target against the most relevant anchor. Other
/// relations take the most relevant target over all satisfying pairs,
/// then the one closest to its anchor. Pairs covering the same pixels are
/// never considered.
fn select<T: Real>(
    targets: &[MergedCandidate<T>],
    anchors: &[MergedCandidate<T>],
    relation: Relation,
    frame: &crate::scene::CameraView<T>,
    params: &RelationParams,
) -> (usize, usize, bool) {
    let anchor_order = by_relevance(anchors);
    let target_order = by_relevance(targets);
    if matches!(relation, Relation::Near | Relation::Far) {
        for &a in &anchor_order {
            let ab = &anchors[a].aabb3d;
            let dist = |t: usize| horizontal_distance(&targets[t].aabb3d, ab);
            let ok = (0..targets.len()).filter(|t| !same_support(&targets[*t], &anchors[a]));
            let best = if relation == Relation::Near {
                ok.min_by(|x, y| dist(*x).partial_cmp(&dist(*y)).unwrap())
            } else {
                ok.max_by(|x, y| dist(*x).partial_cmp(&dist(*y)).unwrap())
            };
            if let Some(t) = best {
                return (t, a, true);
            }
        }
        return (target_order[0], anchor_order[0], false);
    }
    let mut best: Option<(usize, usize, T)> = None;
    for &t in &target_order {
        for &a in &anchor_order {
            let (tc, ac) = (&targets[t], &anchors[a]);
            if same_support(tc, ac) || !check_relation(&tc.aabb3d, &ac.aabb3d, relation, frame, params) {
                continue;
            }
            let d = horizontal_distance(&tc.aabb3d, &ac.aabb3d);
            let better = match best {
                None => true,
                Some((bt, _, bd)) => {
                    let (rb, rt) = (targets[bt].mean_relevance, tc.mean_relevance);
                    rt > rb || (rt == rb && d < bd)
                }
            };
            if better {
                best = Some((t, a, d));
            }
        }
    }
    match best {
        Some((t, a, _)) => (t, a, true),
        None => (target_order[0], anchor_order[0], false),
    }
}

/// One-shot grounding without keeping the per-view caches around.
pub fn ground<T: Real>(
    scene: &Scene<T>,
    field: &FeatureField<T>,
    supervision: &[SupervisionTriplet<T>],
    vocab: &Vocabulary,
    query_id: &str,
    instruction: &Instruction,
    config: &GroundConfig,
) -> Result<GroundingResult<T>, GroundError> {
    Grounder::new(scene, field, supervision, vocab, config.clone())?.ground(query_id, instruction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Mask;
    use crate::scene::Bitmap;

    fn triplet(cat: &str, scale: f64) -> SupervisionTriplet<f64> {
        let vocab = Vocabulary::default();
        SupervisionTriplet {
            mask: Mask {
                view_id: 0,
                instance_id: 0,
                pixels: Bitmap::new(1, 1),
            },
            scale,
            embedding: vocab.embed_concept(cat),
            category: cat.into(),
        }
    }

    #[test]
    fn scale_selection() {
        let v = Vocabulary::default();
        let sup = vec![triplet("book", 0.1), triplet("chair", 0.5)];
        assert_eq!(select_scale(&sup, &v.embed_concept("book")), Some(0.1));
        assert_eq!(select_scale(&sup, &v.embed_concept("chair")), Some(0.5));
        assert_eq!(select_scale(&sup[1..], &v.embed_concept("book")), Some(0.5));
        let tie = vec![triplet("book", 0.3), triplet("book", 0.2), triplet("book", 0.4)];
        assert_eq!(select_scale(&tie, &v.embed_concept("book")), Some(0.2));
        assert_eq!(select_scale::<f64>(&[], &v.embed_concept("book")), None);
    }

    fn merged(min: [f64; 3], max: [f64; 3], rel: f64) -> MergedCandidate<f64> {
        MergedCandidate {
            masks: Default::default(),
            aabb3d: Aabb::new(min.into(), max.into()),
            mean_relevance: rel,
            component: vec![],
        }
    }

    fn frame() -> crate::scene::CameraView<f64> {
        crate::scene::CameraView::look_at(0, [0.0, -4.0, 1.0].into(), [0.0, 0.0, 0.5].into(), 100.0, 64, 48)
    }

    #[test]
    fn selection_rules() {
        let p = RelationParams::default();
        let chair = merged([-0.3, -0.3, 0.0], [0.3, 0.3, 0.5], 0.7);
        let on_chair = merged([-0.1, -0.1, 0.5], [0.1, 0.1, 0.55], 0.6);
        let on_floor = merged([1.9, -0.1, 0.0], [2.1, 0.1, 0.05], 0.8);
        let targets = vec![on_floor.clone(), on_chair.clone()];
        let anchors = vec![chair.clone()];
        assert_eq!(select(&targets, &anchors, Relation::SupportedBy, &frame(), &p), (1, 0, true));
        assert_eq!(select(&targets, &anchors, Relation::Near, &frame(), &p), (1, 0, true));
        assert_eq!(select(&targets, &anchors, Relation::Far, &frame(), &p), (0, 0, true));
        // nothing is under the chair: fall back to the most relevant target
        assert_eq!(select(&targets, &anchors, Relation::Below, &frame(), &p), (0, 0, false));
        assert_eq!(select(&[on_chair], &anchors, Relation::Above, &frame(), &p), (0, 0, true));
    }

    fn with_mask(mut m: MergedCandidate<f64>, view: u32, cols: std::ops::Range<usize>) -> MergedCandidate<f64> {
        m.masks.insert(view, Bitmap::from_fn(10, 4, |u, _| cols.contains(&u)));
        m
    }

    #[test]
    fn same_support_needs_half_the_smaller_mask() {
        let b = merged([0.0; 3], [1.0; 3], 0.6);
        let wide = with_mask(b.clone(), 0, 0..8);
        assert!(same_support(&with_mask(b.clone(), 0, 6..10), &wide));
        assert!(same_support(&wide, &with_mask(b.clone(), 0, 6..10)));
        assert!(!same_support(&with_mask(b.clone(), 0, 7..10), &wide));
        // overlap only counts within one view
        assert!(!same_support(&with_mask(b.clone(), 1, 0..8), &wide));
        assert!(!same_support(&b, &wide));
    }

    #[test]
    fn a_fragment_is_never_its_own_anchor() {
        let p = RelationParams::default();
        let chair = with_mask(merged([-0.3, -0.3, 0.0], [0.3, 0.3, 0.5], 0.7), 0, 0..6);
        // a sliver of the chair's own pixels, lifted just above its box and
        // found again as a (more relevant) target
        let slab = with_mask(merged([-0.2, -0.2, 0.5], [0.2, 0.2, 0.53], 0.9), 0, 0..3);
        let book = with_mask(merged([-0.1, -0.1, 0.5], [0.1, 0.1, 0.55], 0.6), 0, 8..10);
        assert!(check_relation(&slab.aabb3d, &chair.aabb3d, Relation::SupportedBy, &frame(), &p));
        let got = select(&[slab.clone(), book], &[chair.clone()], Relation::SupportedBy, &frame(), &p);
        assert_eq!(got, (1, 0, true));
        let got = select(&[slab], &[chair], Relation::Near, &frame(), &p);
        assert!(!got.2);
    }

    fn flat_map(peak: f64) -> RelevanceMap<f64> {
        RelevanceMap::new(0, 2, 1, vec![0.1, peak])
    }

    #[test]
    fn relative_floor_on_logit_scale() {
        // logit(0.8) = ln 4; 0.5 of it is ln 2, i.e. relevance 2/3
        let maps = [flat_map(0.6), flat_map(0.8)];
        assert!((relative_floor(&maps, 0.5) - 2.0 / 3.0).abs() < 1e-12);
        assert!((relative_floor(&maps, 1.0) - 0.8).abs() < 1e-12);
        assert_eq!(relative_floor(&maps, 0.0), 0.0);
        assert_eq!(relative_floor(&[flat_map(0.4)], 0.7), 0.0);
        assert_eq!(relative_floor::<f64>(&[], 0.7), 0.0);
    }
}
