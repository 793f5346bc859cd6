use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use super::regions::Region;
use super::relevance::{RelevanceMap, ViewCache};
use crate::embed::distance;
use crate::field::{FeatureField, FieldKind};
use crate::geom::{Aabb, Vec3};
use crate::real::{lit, Real};
use crate::scene::{Bitmap, Scene};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CandidateError {
    #[error("region in view {view_id} has no finite depth at its peak {pixel:?}")]
    NoDepth { view_id: u32, pixel: (u32, u32) },
    #[error("empty region")]
    EmptyRegion,
}

/// A relevant region with its peak lifted to 3D and the instance feature there.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct Candidate<T> {
    pub region: Region,
    pub peak_pixel: (u32, u32),
    pub point3d: Vec3<T>,
    pub feature: Vec<T>,
    pub view_id: u32,
    pub peak_relevance: T,
}

/// Pixel lifted to 3D at its rendered depth, with the instance feature at
/// pyramid `level` queried there. `None` when the ray renders no depth.
pub fn pixel_instance_feature<T: Real>(
    view: &ViewCache<T>,
    scene: &Scene<T>,
    field: &FeatureField<T>,
    level: usize,
    (u, v): (u32, u32),
) -> Option<(Vec3<T>, Vec<T>)> {
    let depth = view.depth_at(u as usize, v as usize);
    let half: T = lit(0.5);
    let point = view
        .camera
        .deproject(lit::<T>(u as f64) + half, lit::<T>(v as f64) + half, depth)
        .ok()?;
    // occupancy as the renderer saw it: the expected termination can sit a
    // fraction of a segment in front of the analytic surface
    let (sigma, color) = view
        .occupancy_at(u as usize, v as usize, depth)
        .unwrap_or_else(|| scene.occupancy(point, (point - view.camera.origin()).normalized()));
    Some((point, field.query_level(FieldKind::Instance, point, level, sigma, color)))
}

/// Splits a relevance region into instance-consistent parts. Seeds at the
/// most relevant unclaimed pixel and grows over 4-neighbors whose instance
/// feature lies within `epsilon` of the seed's, then regrows once around
/// the mean feature of that first pass so a seed straddling two objects
/// does not define the part. Repeats until every pixel is claimed.
/// Features come from the finest instance level, where object boundaries
/// are sharpest. Parts below `min_pixels` and pixels without depth are
/// dropped; parts come out in seed order (descending relevance).
#[allow(clippy::too_many_arguments)]
pub fn split_region<T: Real>(
    region: &Region,
    map: &RelevanceMap<T>,
    view: &ViewCache<T>,
    scene: &Scene<T>,
    field: &FeatureField<T>,
    epsilon: T,
    min_pixels: usize,
) -> Vec<Region> {
    let finest = field.instance.levels.len() - 1;
    let index: HashMap<(u32, u32), usize> = region.pixels.iter().enumerate().map(|(i, p)| (*p, i)).collect();
    let features: Vec<Option<Vec<T>>> = region
        .pixels
        .iter()
        .map(|p| pixel_instance_feature(view, scene, field, finest, *p).map(|f| f.1))
        .collect();
    let mut claimed: Vec<bool> = features.iter().map(Option::is_none).collect();
    // 4-connected growth from `start` over unclaimed pixels near `reference`
    let grow = |start: usize, reference: &[T], claimed: &[bool]| -> Vec<usize> {
        let mut seen = vec![false; claimed.len()];
        seen[start] = true;
        let mut members = vec![start];
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            let (u, v) = region.pixels[i];
            let neighbors = [
                u.checked_sub(1).map(|x| (x, v)),
                Some((u + 1, v)),
                v.checked_sub(1).map(|y| (u, y)),
                Some((u, v + 1)),
            ];
            for q in neighbors.into_iter().flatten() {
                let Some(&j) = index.get(&q) else { continue };
                if seen[j] || claimed[j] {
                    continue;
                }
                let f = features[j].as_ref().expect("unclaimed pixels have features");
                if distance(f, reference) < epsilon {
                    seen[j] = true;
                    members.push(j);
                    stack.push(j);
                }
            }
        }
        members
    };
    let mut order: Vec<usize> = (0..region.pixels.len()).collect();
    order.sort_by(|a, b| {
        let (pa, pb) = (region.pixels[*a], region.pixels[*b]);
        map.get(pb.0 as usize, pb.1 as usize)
            .partial_cmp(&map.get(pa.0 as usize, pa.1 as usize))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(b))
    });
    let mut parts = Vec::new();
    for seed in order {
        if claimed[seed] {
            continue;
        }
        let first = grow(seed, features[seed].as_ref().expect("unclaimed"), &claimed);
        let mean = mean_feature(first.iter().map(|i| features[*i].as_ref().expect("unclaimed")));
        let start = *first
            .iter()
            .min_by(|a, b| {
                let da = distance(features[**a].as_ref().expect("unclaimed"), &mean);
                let db = distance(features[**b].as_ref().expect("unclaimed"), &mean);
                da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("growth keeps its start");
        let mut members = grow(start, &mean, &claimed);
        if !members.contains(&seed) {
            // the seed itself did not fit; it stands alone
            members = vec![seed];
        }
        for &m in &members {
            claimed[m] = true;
        }
        if members.len() >= min_pixels {
            members.sort_unstable();
            parts.push(Region {
                view_id: region.view_id,
                pixels: members.into_iter().map(|i| region.pixels[i]).collect(),
            });
        }
    }
    parts
}

fn mean_feature<'a, T: Real>(features: impl Iterator<Item = &'a Vec<T>>) -> Vec<T> {
    let mut sum: Vec<T> = Vec::new();
    let mut n = 0usize;
    for f in features {
        if sum.is_empty() {
            sum = vec![T::zero(); f.len()];
        }
        for (s, x) in sum.iter_mut().zip(f) {
            *s += *x;
        }
        n += 1;
    }
    let inv = T::one() / lit(n.max(1) as f64);
    sum.into_iter().map(|s| s * inv).collect()
}

pub fn make_candidate<T: Real>(
    region: &Region,
    map: &RelevanceMap<T>,
    view: &ViewCache<T>,
    scene: &Scene<T>,
    field: &FeatureField<T>,
    level: usize,
) -> Result<Candidate<T>, CandidateError> {
    let mut peak = *region.pixels.first().ok_or(CandidateError::EmptyRegion)?;
    let mut best = map.get(peak.0 as usize, peak.1 as usize);
    for &(u, v) in &region.pixels[1..] {
        let r = map.get(u as usize, v as usize);
        if r > best {
            best = r;
            peak = (u, v);
        }
    }
    let (point3d, _) = pixel_instance_feature(view, scene, field, level, peak).ok_or(CandidateError::NoDepth {
        view_id: region.view_id,
        pixel: peak,
    })?;
    // averaged over the region: a peak on a junction between two stacked
    // objects interpolates both and would bridge them in the graph
    let lifted: Vec<Vec<T>> = region
        .pixels
        .iter()
        .filter_map(|p| pixel_instance_feature(view, scene, field, level, *p).map(|f| f.1))
        .collect();
    let feature = mean_feature(lifted.iter());
    Ok(Candidate {
        region: region.clone(),
        peak_pixel: peak,
        point3d,
        feature,
        view_id: region.view_id,
        peak_relevance: best,
    })
}

/// One connected component of candidates, fused across views.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct MergedCandidate<T> {
    /// Per-view OR of the member regions.
    #[serde(skip)]
    pub masks: BTreeMap<u32, Bitmap>,
    pub aabb3d: Aabb<T>,
    pub mean_relevance: T,
    pub component: Vec<usize>,
}

impl<T: Real> MergedCandidate<T> {
    pub fn mask(&self, view_id: u32) -> Option<&Bitmap> {
        self.masks.get(&view_id)
    }

    pub fn pixel_count(&self) -> usize {
        self.masks.values().map(Bitmap::count).sum()
    }
}

/// Fraction of deprojected points dropped at each end of every axis when
/// bounding a merged candidate. Silhouette pixels whose ray slips past the
/// object render the depth of whatever lies behind it; a few such points
/// would otherwise stretch the box across the gap.
pub const AABB_TRIM: f64 = 0.02;

/// Per-axis quantile box of `points`, dropping `floor(trim * n)` points at
/// each end. Empty input gives an empty box.
pub fn trimmed_bounds<T: Real>(points: &[Vec3<T>], trim: f64) -> Aabb<T> {
    if points.is_empty() {
        return Aabb::empty();
    }
    let n = points.len();
    let k = ((trim * n as f64).floor() as usize).min((n - 1) / 2);
    let mut lo = [T::zero(); 3];
    let mut hi = [T::zero(); 3];
    for axis in 0..3 {
        let mut xs: Vec<T> = points.iter().map(|p| p.to_array()[axis]).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
        lo[axis] = xs[k];
        hi[axis] = xs[n - 1 - k];
    }
    Aabb::new(Vec3::new(lo[0], lo[1], lo[2]), Vec3::new(hi[0], hi[1], hi[2]))
}

/// Fuses each component: OR of masks per view, trimmed bounding box of the member
/// pixels deprojected at their rendered depth, mean of member peak relevances.
pub fn merge<T: Real>(
    components: &[Vec<usize>],
    candidates: &[Candidate<T>],
    views: &[ViewCache<T>],
) -> Vec<MergedCandidate<T>> {
    let half: T = lit(0.5);
    components
        .iter()
        .map(|comp| {
            let mut masks: BTreeMap<u32, Bitmap> = BTreeMap::new();
            for &i in comp {
                let c = &candidates[i];
                let Some(view) = views.iter().find(|v| v.view_id() == c.view_id) else {
                    continue;
                };
                let m = masks
                    .entry(c.view_id)
                    .or_insert_with(|| Bitmap::new(view.camera.width, view.camera.height));
                for &(u, v) in &c.region.pixels {
                    m.set(u as usize, v as usize, true);
                }
            }
            let mut points = Vec::new();
            for (view_id, m) in &masks {
                let view = views.iter().find(|v| v.view_id() == *view_id).expect("view present");
                for (u, v) in m.pixels() {
                    let d = view.depth_at(u, v);
                    if let Ok(p) = view.camera.deproject(lit::<T>(u as f64) + half, lit::<T>(v as f64) + half, d) {
                        points.push(p);
                    }
                }
            }
            let aabb3d = trimmed_bounds(&points, AABB_TRIM);
            let n: T = lit(comp.len().max(1) as f64);
            let mean_relevance = comp.iter().map(|i| candidates[*i].peak_relevance).sum::<T>() / n;
            MergedCandidate {
                masks,
                aabb3d,
                mean_relevance,
                component: comp.clone(),
            }
        })
        .collect()
}
