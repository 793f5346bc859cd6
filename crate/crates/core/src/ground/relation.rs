use log::warn;
use serde::{Deserialize, Serialize};

use crate::geom::Aabb;
use crate::parse::Relation;
use crate::real::{lit, Real};
use crate::scene::CameraView;

/// Tolerances for the geometric relation tests, in scene units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelationParams {
    pub eps_contact: f64,
    /// Minimum footprint intersection over the smaller footprint.
    pub min_overlap: f64,
    pub eps_lateral: f64,
}

impl Default for RelationParams {
    fn default() -> Self {
        Self {
            eps_contact: 0.05,
            min_overlap: 0.2,
            eps_lateral: 0.05,
        }
    }
}

fn degenerate<T: Real>(b: &Aabb<T>) -> bool {
    b.is_empty() || !b.min.is_finite() || !b.max.is_finite() || !(b.volume() > T::zero())
}

/// Footprint intersection divided by the smaller footprint.
pub fn footprint_overlap<T: Real>(a: &Aabb<T>, b: &Aabb<T>) -> T {
    let m = a.footprint_area().min(b.footprint_area());
    if m > T::zero() {
        a.footprint_intersection(b) / m
    } else {
        T::zero()
    }
}

pub fn horizontal_distance<T: Real>(a: &Aabb<T>, b: &Aabb<T>) -> T {
    let (p, q) = (a.center(), b.center());
    ((p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y)).sqrt()
}

/// Geometric test of `target <relation> anchor`.
///
/// Near and Far are comparative; any valid pair passes here and the
/// ranking by [`horizontal_distance`] happens at selection time.
pub fn check_relation<T: Real>(
    target: &Aabb<T>,
    anchor: &Aabb<T>,
    relation: Relation,
    frame: &CameraView<T>,
    params: &RelationParams,
) -> bool {
    if degenerate(target) || degenerate(anchor) {
        warn!("relation check on a degenerate box");
        return false;
    }
    let eps: T = lit(params.eps_contact);
    let overlaps = |a: &Aabb<T>, b: &Aabb<T>| footprint_overlap(a, b) >= lit(params.min_overlap);
    let on_top = |upper: &Aabb<T>, lower: &Aabb<T>| (upper.min.z - lower.max.z).abs() <= eps && overlaps(upper, lower);
    let lateral: T = lit(params.eps_lateral);
    let (tc, ac) = (frame.to_camera(target.center()), frame.to_camera(anchor.center()));
    match relation {
        Relation::SupportedBy => on_top(target, anchor),
        Relation::Supporting => on_top(anchor, target),
        Relation::Above => target.min.z >= anchor.max.z - eps && overlaps(target, anchor),
        Relation::Below => target.max.z <= anchor.min.z + eps && overlaps(target, anchor),
        Relation::Near | Relation::Far => true,
        Relation::Left => tc.x <= ac.x - lateral,
        Relation::Right => tc.x >= ac.x + lateral,
        Relation::Front => tc.z <= ac.z - lateral,
        Relation::Behind => tc.z >= ac.z + lateral,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;
    use proptest::prelude::*;

    fn b(min: [f64; 3], max: [f64; 3]) -> Aabb<f64> {
        Aabb::new(Vec3::from(min), Vec3::from(max))
    }

    fn frame() -> CameraView<f64> {
        // looking along +y from behind the origin
        CameraView::look_at(0, Vec3::new(0.0, -4.0, 1.0), Vec3::new(0.0, 0.0, 1.0), 100.0, 64, 48)
    }

    #[test]
    fn stacked_boxes() {
        let p = RelationParams::default();
        let table = b([-0.5, -0.5, 0.0], [0.5, 0.5, 0.7]);
        let book = b([-0.1, -0.1, 0.7], [0.1, 0.1, 0.75]);
        assert!(check_relation(&book, &table, Relation::SupportedBy, &frame(), &p));
        assert!(check_relation(&table, &book, Relation::Supporting, &frame(), &p));
        assert!(!check_relation(&book, &table, Relation::Below, &frame(), &p));
        assert!(check_relation(&book, &table, Relation::Above, &frame(), &p));
        assert!(!check_relation(&table, &book, Relation::Above, &frame(), &p));
        assert!(check_relation(&table, &book, Relation::Below, &frame(), &p));
        let lifted = b([-0.1, -0.1, 1.2], [0.1, 0.1, 1.3]);
        assert!(!check_relation(&lifted, &table, Relation::SupportedBy, &frame(), &p));
        assert!(check_relation(&lifted, &table, Relation::Above, &frame(), &p));
        let beside = b([0.8, -0.1, 0.7], [1.0, 0.1, 0.75]);
        assert!(!check_relation(&beside, &table, Relation::SupportedBy, &frame(), &p));
    }

    #[test]
    fn camera_frame_directions() {
        let p = RelationParams::default();
        let anchor = b([-0.2, -0.2, 0.0], [0.2, 0.2, 0.4]);
        let left = b([-1.4, -0.2, 0.0], [-1.0, 0.2, 0.4]);
        let front = b([-0.2, -1.4, 0.0], [0.2, -1.0, 0.4]);
        assert!(check_relation(&left, &anchor, Relation::Left, &frame(), &p));
        assert!(!check_relation(&left, &anchor, Relation::Right, &frame(), &p));
        assert!(check_relation(&anchor, &left, Relation::Right, &frame(), &p));
        assert!(check_relation(&front, &anchor, Relation::Front, &frame(), &p));
        assert!(check_relation(&anchor, &front, Relation::Behind, &frame(), &p));
        assert!(!check_relation(&front, &anchor, Relation::Behind, &frame(), &p));
    }

    #[test]
    fn degenerate_boxes_fail() {
        let p = RelationParams::default();
        let flat = b([0.0, 0.0, 0.5], [1.0, 1.0, 0.5]);
        let ok = b([0.0, 0.0, 0.0], [1.0, 1.0, 0.5]);
        assert!(!check_relation(&flat, &ok, Relation::Near, &frame(), &p));
        assert!(!check_relation(&ok, &Aabb::empty(), Relation::Far, &frame(), &p));
    }

    #[test]
    fn distances_rank_near_and_far() {
        let anchor = b([-0.1, -0.1, 0.0], [0.1, 0.1, 0.2]);
        let a = b([0.9, -0.1, 0.0], [1.1, 0.1, 0.2]);
        let c = b([2.9, -0.1, 0.0], [3.1, 0.1, 0.2]);
        assert!((horizontal_distance(&a, &anchor) - 1.0).abs() < 1e-12);
        assert!((horizontal_distance(&c, &anchor) - 3.0).abs() < 1e-12);
    }

    fn boxes() -> impl Strategy<Value = Aabb<f64>> {
        (prop::array::uniform3(-1.0f64..1.0), prop::array::uniform3(0.02f64..0.8))
            .prop_map(|(lo, size)| b(lo, [lo[0] + size[0], lo[1] + size[1], lo[2] + size[2]]))
    }

    /// `top` resting on (or hovering just above) `base`, shifted sideways.
    fn stacks() -> impl Strategy<Value = (Aabb<f64>, Aabb<f64>)> {
        (boxes(), boxes(), -0.3f64..0.3, -0.3f64..0.3, 0.0f64..0.05).prop_map(|(base, top, dx, dy, gap)| {
            let c = base.center();
            let h = (top.max - top.min) * 0.5;
            let z = base.max.z + gap;
            let t = b([c.x + dx - h.x, c.y + dy - h.y, z], [c.x + dx + h.x, c.y + dy + h.y, z + 2.0 * h.z]);
            (base, t)
        })
    }

    fn disjoint(a: &Aabb<f64>, c: &Aabb<f64>) -> bool {
        a.max.x < c.min.x || c.max.x < a.min.x || a.max.y < c.min.y || c.max.y < a.min.y || a.max.z < c.min.z || c.max.z < a.min.z
    }

    proptest! {
        #[test]
        fn support_is_the_converse_of_supported_by((base, top) in stacks(), other in boxes()) {
            let (f, p) = (frame(), RelationParams::default());
            for (x, y) in [(&top, &base), (&base, &top), (&other, &base), (&top, &other)] {
                prop_assert_eq!(
                    check_relation(x, y, Relation::SupportedBy, &f, &p),
                    check_relation(y, x, Relation::Supporting, &f, &p)
                );
            }
        }

        #[test]
        fn directional_relations_are_asymmetric(a in boxes(), c in boxes()) {
            prop_assume!(disjoint(&a, &c));
            let (f, p) = (frame(), RelationParams::default());
            for r in [Relation::Above, Relation::Below, Relation::Left, Relation::Right, Relation::Front, Relation::Behind] {
                prop_assert!(!(check_relation(&a, &c, r, &f, &p) && check_relation(&c, &a, r, &f, &p)), "{:?}", r);
            }
            prop_assert!(!(check_relation(&a, &c, Relation::SupportedBy, &f, &p) && check_relation(&c, &a, Relation::SupportedBy, &f, &p)));
        }
    }
}
