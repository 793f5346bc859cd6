//! Scene files and raster exports (binary PGM/PPM, run-length mask JSON).

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Bitmap, Mask, RenderedView, Scene};
use crate::real::Real;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
}

pub fn read_json<D: serde::de::DeserializeOwned>(path: &Path) -> Result<D, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(value).map_err(|source| IoError::Json {
        path: path.display().to_string(),
        source,
    })?;
    write_bytes(path, text.as_bytes())
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    fs::write(path, bytes).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads and validates a scene file.
pub fn load_scene<T: Real>(path: &Path) -> Result<Scene<T>, IoError> {
    let scene: Scene<T> = read_json(path)?;
    scene.validate().map_err(|e| IoError::Invalid {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    Ok(scene)
}

pub fn save_scene<T: Real>(path: &Path, scene: &Scene<T>) -> Result<(), IoError> {
    write_json(path, scene)
}

/// Binary graymap (P5, maxval 255).
pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Binary pixmap (P6, maxval 255); `pixels` is interleaved RGB.
pub fn encode_ppm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height * 3);
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Maps values in `[lo, hi]` linearly onto `[0, 255]`; non-finite values become 0.
pub fn quantize<T: Real>(values: &[T], lo: f64, hi: f64) -> Vec<u8> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    values
        .iter()
        .map(|v| {
            let v = v.to_f64_lossy();
            if !v.is_finite() {
                0
            } else {
                (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8
            }
        })
        .collect()
}

/// Depth as a graymap: near surfaces bright, misses black.
pub fn depth_pgm<T: Real>(view: &RenderedView<T>) -> Vec<u8> {
    let finite: Vec<f64> = view
        .depth
        .iter()
        .map(|d| d.to_f64_lossy())
        .filter(|d| d.is_finite())
        .collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut px = quantize(&view.depth, lo, hi);
    for (p, d) in px.iter_mut().zip(&view.depth) {
        if d.is_finite() {
            *p = 255 - *p / 2;
        }
    }
    encode_pgm(view.width, view.height, &px)
}

pub fn rgb_ppm<T: Real>(view: &RenderedView<T>) -> Vec<u8> {
    let flat: Vec<T> = view.rgb.iter().flat_map(|c| c.iter().copied()).collect();
    encode_ppm(view.width, view.height, &quantize(&flat, 0.0, 1.0))
}

/// Run-length encoded mask: alternating run lengths over the row-major
/// pixel sequence, starting with a (possibly empty) run of unset pixels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub view_id: u32,
    pub instance_id: i64,
    pub width: usize,
    pub height: usize,
    pub counts: Vec<usize>,
}

impl RleMask {
    pub fn encode(mask: &Mask) -> Self {
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0usize;
        for b in &mask.pixels.bits {
            if *b == current {
                run += 1;
            } else {
                counts.push(run);
                current = *b;
                run = 1;
            }
        }
        counts.push(run);
        Self {
            view_id: mask.view_id,
            instance_id: mask.instance_id,
            width: mask.pixels.width,
            height: mask.pixels.height,
            counts,
        }
    }

    pub fn decode(&self) -> Result<Mask, String> {
        let mut bits = Vec::with_capacity(self.width * self.height);
        let mut value = false;
        for c in &self.counts {
            bits.extend(std::iter::repeat_n(value, *c));
            value = !value;
        }
        if bits.len() != self.width * self.height {
            return Err(format!(
                "run lengths cover {} pixels, expected {}",
                bits.len(),
                self.width * self.height
            ));
        }
        Ok(Mask {
            view_id: self.view_id,
            instance_id: self.instance_id,
            pixels: Bitmap {
                width: self.width,
                height: self.height,
                bits,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pgm_header() {
        let bytes = encode_pgm(2, 1, &[0, 255]);
        assert_eq!(&bytes[..], b"P5\n2 1\n255\n\x00\xff");
    }

    #[test]
    fn quantize_clamps_and_zeroes_nonfinite() {
        let q = quantize(&[0.0f64, 0.5, 1.0, 2.0, f64::NAN], 0.0, 1.0);
        assert_eq!(q, vec![0, 128, 255, 255, 0]);
    }

    proptest! {
        #[test]
        fn rle_round_trip(bits in prop::collection::vec(any::<bool>(), 12)) {
            let mask = Mask {
                view_id: 2,
                instance_id: 9,
                pixels: Bitmap { width: 4, height: 3, bits },
            };
            prop_assert_eq!(RleMask::encode(&mask).decode().unwrap(), mask);
        }
    }
}
