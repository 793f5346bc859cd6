//! Binary field container: `SPFC`, a little-endian `u32` version, a `u64`
//! header length, a JSON header, then `f32` payloads. Grid slots are written
//! sorted by vertex so the bytes do not depend on training visit order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::train::TrainConfig;
use super::{FeatureField, Grid, GridInit, Sampler, ScalePyramid};
use crate::geom::{Aabb, Vec3};
use crate::real::{lit, Real};

const MAGIC: &[u8; 4] = b"SPFC";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a field checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

#[derive(Serialize, Deserialize)]
struct PyramidHeader {
    dim: usize,
    resolutions: Vec<usize>,
    inits: Vec<GridInit>,
    slots: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    bounds_min: [f64; 3],
    bounds_max: [f64; 3],
    scale_edges: Vec<f64>,
    language: PyramidHeader,
    instance: PyramidHeader,
    use_vis_mod: bool,
    sigma_ref: f64,
    near: f64,
    far: f64,
    samples: usize,
    config: Option<TrainConfig>,
}

fn pyramid_header<T: Real>(p: &ScalePyramid<T>) -> PyramidHeader {
    PyramidHeader {
        dim: p.dim(),
        resolutions: p.resolutions(),
        inits: p.levels.iter().map(Grid::init).collect(),
        slots: p.levels.iter().map(Grid::slots).collect(),
    }
}

fn put_f32<T: Real>(out: &mut Vec<u8>, x: T) {
    out.extend_from_slice(&(x.to_f64_lossy() as f32).to_le_bytes());
}

pub fn write_checkpoint<T: Real, W: Write>(
    mut w: W,
    field: &FeatureField<T>,
    config: Option<&TrainConfig>,
) -> Result<(), CheckpointError> {
    let b = field.language.bounds;
    let header = Header {
        bounds_min: b.min.cast::<f64>().to_array(),
        bounds_max: b.max.cast::<f64>().to_array(),
        scale_edges: field.language.scale_edges.iter().map(|e| e.to_f64_lossy()).collect(),
        language: pyramid_header(&field.language),
        instance: pyramid_header(&field.instance),
        use_vis_mod: field.use_vis_mod,
        sigma_ref: field.sigma_ref.to_f64_lossy(),
        near: field.sampler.near.to_f64_lossy(),
        far: field.sampler.far.to_f64_lossy(),
        samples: field.sampler.samples,
        config: config.cloned(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for pyr in [&field.language, &field.instance] {
        for grid in &pyr.levels {
            let dim = grid.dim();
            let mut order: Vec<usize> = (0..grid.slots()).collect();
            order.sort_unstable_by_key(|s| grid.vertex_of_slot(*s));
            for s in order {
                out.extend_from_slice(&grid.vertex_of_slot(s).to_le_bytes());
                for x in &grid.values()[s * dim..(s + 1) * dim] {
                    put_f32(&mut out, *x);
                }
            }
        }
    }
    for x in field.vis_mod_lang.iter().chain(&field.vis_mod_inst) {
        put_f32(&mut out, *x);
    }
    w.write_all(&out)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| CheckpointError::Corrupt("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32<T: Real>(&mut self) -> Result<T, CheckpointError> {
        let x = f32::from_le_bytes(self.take(4)?.try_into().unwrap());
        Ok(lit(f64::from(x)))
    }
}

fn read_pyramid<T: Real>(
    cur: &mut Cursor<'_>,
    h: &PyramidHeader,
    bounds: Aabb<T>,
    edges: &[T],
) -> Result<ScalePyramid<T>, CheckpointError> {
    let n = h.resolutions.len();
    if n == 0
        || h.inits.len() != n
        || h.slots.len() != n
        || edges.len() != n + 1
        || h.resolutions[0] < 2
        || !h.resolutions.windows(2).all(|w| w[0] < w[1])
        || !edges.windows(2).all(|w| w[0] < w[1])
    {
        return Err(CheckpointError::Corrupt("inconsistent pyramid header".into()));
    }
    let mut levels = Vec::with_capacity(n);
    for l in 0..n {
        let res = h.resolutions[l];
        let total = res.checked_pow(3).filter(|t| *t <= u32::MAX as usize);
        let total = total.ok_or_else(|| CheckpointError::Corrupt("resolution too large".into()))?;
        let mut entries = Vec::with_capacity(h.slots[l]);
        for _ in 0..h.slots[l] {
            let v = cur.u32()?;
            if v as usize >= total {
                return Err(CheckpointError::Corrupt(format!("vertex {v} out of range")));
            }
            let vals = (0..h.dim).map(|_| cur.f32()).collect::<Result<Vec<T>, _>>()?;
            entries.push((v, vals));
        }
        levels.push(Grid::from_parts(res, h.dim, h.inits[l], entries));
    }
    Ok(ScalePyramid {
        bounds,
        levels,
        scale_edges: edges.to_vec(),
    })
}

/// Reads a checkpoint; returns the field and the training config if stored.
pub fn read_checkpoint<T: Real, R: Read>(
    mut r: R,
) -> Result<(FeatureField<T>, Option<TrainConfig>), CheckpointError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let len = u64::from_le_bytes(cur.take(8)?.try_into().unwrap());
    let len = usize::try_from(len).map_err(|_| CheckpointError::Corrupt("header length".into()))?;
    let header: Header = serde_json::from_slice(cur.take(len)?)?;
    let v = |a: [f64; 3]| Vec3::new(lit(a[0]), lit(a[1]), lit(a[2]));
    let bounds = Aabb::new(v(header.bounds_min), v(header.bounds_max));
    let edges: Vec<T> = header.scale_edges.iter().map(|e| lit(*e)).collect();
    let language = read_pyramid(&mut cur, &header.language, bounds, &edges)?;
    let instance = read_pyramid(&mut cur, &header.instance, bounds, &edges)?;
    let mut read_vec = |n: usize| (0..n).map(|_| cur.f32()).collect::<Result<Vec<T>, _>>();
    let vis_mod_lang = read_vec(header.language.dim * 4)?;
    let vis_mod_inst = read_vec(header.instance.dim * 4)?;
    if cur.pos != bytes.len() {
        return Err(CheckpointError::Corrupt("trailing bytes".into()));
    }
    if !(header.near < header.far) || header.samples < 2 || !(header.sigma_ref > 0.0) {
        return Err(CheckpointError::Corrupt("invalid sampler".into()));
    }
    let field = FeatureField {
        language,
        instance,
        vis_mod_lang,
        vis_mod_inst,
        use_vis_mod: header.use_vis_mod,
        sigma_ref: lit(header.sigma_ref),
        sampler: Sampler::new(header.near, header.far, header.samples),
    };
    Ok((field, header.config))
}

pub fn save_checkpoint<T: Real>(
    path: &Path,
    field: &FeatureField<T>,
    config: Option<&TrainConfig>,
) -> Result<(), CheckpointError> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, field, config)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint<T: Real>(
    path: &Path,
) -> Result<(FeatureField<T>, Option<TrainConfig>), CheckpointError> {
    read_checkpoint(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::tests::blank_field;

    fn populated() -> FeatureField<f64> {
        let mut f = blank_field(3, 2);
        for (l, g) in f.language.levels.iter_mut().enumerate() {
            for v in [7u32, 2, 11] {
                let s = g.materialize(v + l as u32);
                g.values_mut()[s * 3] = 0.25 * v as f64;
            }
        }
        f.instance.levels[1] = Grid::new(5, 2, GridInit::Uniform { seed: 4, scale: 0.1 });
        f.instance.levels[1].materialize(3);
        f.vis_mod_lang[5] = -1.5;
        f
    }

    #[test]
    fn round_trip_preserves_field_at_f32_precision() {
        let f = populated();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &f, Some(&TrainConfig::default())).unwrap();
        assert_eq!(&buf[..4], b"SPFC");
        let (g, cfg) = read_checkpoint::<f64, _>(&buf[..]).unwrap();
        assert_eq!(cfg, Some(TrainConfig::default()));
        assert_eq!(g.vis_mod_lang[5], -1.5);
        for l in 0..3 {
            for v in 0..f.language.levels[l].res().pow(3) as u32 {
                let a = f.language.levels[l].value(v);
                let b = g.language.levels[l].value(v);
                for (x, y) in a.iter().zip(&b) {
                    assert!((x - y).abs() < 1e-6);
                }
            }
        }
        assert_eq!(g.instance.levels[1].value(9), f.instance.levels[1].value(9));
        // bytes are stable across a second write
        let mut again = Vec::new();
        write_checkpoint(&mut again, &g, Some(&TrainConfig::default())).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(read_checkpoint::<f64, _>(&b"NOPE"[..]), Err(CheckpointError::BadMagic)));
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &populated(), None).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_checkpoint::<f64, _>(&buf[..]), Err(CheckpointError::Corrupt(_))));
    }
}
