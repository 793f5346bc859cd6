use serde::Serialize;

use super::relevance::RelevanceMap;
use crate::real::Real;
use crate::scene::Bitmap;

/// Regions smaller than this are treated as speckle.
pub const MIN_PIXELS: usize = 6;

/// A 4-connected set of pixels in one view.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Region {
    pub view_id: u32,
    /// Pixels in row-major scan order.
    pub pixels: Vec<(u32, u32)>,
}

impl Region {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn to_bitmap(&self, width: usize, height: usize) -> Bitmap {
        let mut b = Bitmap::new(width, height);
        for &(u, v) in &self.pixels {
            b.set(u as usize, v as usize, true);
        }
        b
    }
}

/// 4-connected components of a binary image, ordered by their first pixel
/// in scan order.
pub fn connected_regions(mask: &Bitmap, view_id: u32, min_pixels: usize) -> Vec<Region> {
    let (w, h) = (mask.width, mask.height);
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if seen[start] || !mask.bits[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut members = Vec::new();
        while let Some(i) = stack.pop() {
            members.push(i);
            let (u, v) = (i % w, i / w);
            let mut visit = |j: usize| {
                if !seen[j] && mask.bits[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if u > 0 {
                visit(i - 1);
            }
            if u + 1 < w {
                visit(i + 1);
            }
            if v > 0 {
                visit(i - w);
            }
            if v + 1 < h {
                visit(i + w);
            }
        }
        if members.len() >= min_pixels {
            members.sort_unstable();
            out.push(Region {
                view_id,
                pixels: members.into_iter().map(|i| ((i % w) as u32, (i / w) as u32)).collect(),
            });
        }
    }
    out
}

/// Components of `{R > tau}` with at least `min_pixels` pixels.
pub fn extract_regions<T: Real>(map: &RelevanceMap<T>, tau: T, min_pixels: usize) -> Vec<Region> {
    let mask = Bitmap::from_fn(map.width, map.height, |u, v| map.get(u, v) > tau);
    connected_regions(&mask, map.view_id, min_pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn below_threshold_is_empty() {
        let m = RelevanceMap::new(0, 4, 4, vec![0.5f64; 16]);
        assert!(extract_regions(&m, 0.55, 1).is_empty());
    }

    #[test]
    fn two_blobs_and_speckle() {
        let mut vals = vec![0.0f64; 10 * 6];
        for v in 0..3 {
            for u in 0..3 {
                vals[v * 10 + u] = 0.9;
                vals[(v + 3) * 10 + u + 6] = 0.8;
            }
        }
        vals[5] = 0.99;
        let m = RelevanceMap::new(1, 10, 6, vals);
        let r = extract_regions(&m, 0.55, MIN_PIXELS);
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].pixels[0], (0, 0));
        assert_eq!(r[1].len(), 9);
        assert_eq!(extract_regions(&m, 0.55, 1).len(), 3);
    }

    #[test]
    fn diagonal_neighbours_are_separate() {
        let b = Bitmap::from_fn(3, 3, |u, v| u == v);
        assert_eq!(connected_regions(&b, 0, 1).len(), 3);
    }
}
