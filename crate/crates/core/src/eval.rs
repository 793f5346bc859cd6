//! Localization accuracy and mask IoU over annotated synthetic scenes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::Vocabulary;
use crate::field::{build_supervision, load_checkpoint, train_fields, FeatureField, TrainConfig};
use crate::ground::{GroundConfig, Grounder, GroundingResult};
use crate::parse::Parser;
use crate::real::{lit, Real};
use crate::scene::io::{load_scene, read_json, IoError};
use crate::scene::{render_view, Bitmap, QueryText, Scene};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("result has no entry for view {0}")]
    MissingView(u32),
    #[error("ground-truth mask is empty")]
    EmptyGroundTruth,
    #[error("dataset: {0}")]
    Io(#[from] IoError),
    #[error("no scenes found under {0}")]
    NoScenes(PathBuf),
}

/// Ground truth for one query in one view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewTruth {
    pub view_id: u32,
    pub mask: Bitmap,
    /// Inclusive pixel box `(u0, v0, u1, v1)`.
    pub bbox: (usize, usize, usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryCase {
    pub query_id: String,
    pub text: String,
    pub gt_target_id: i64,
    /// Views where the target covers at least the visibility threshold.
    pub views: Vec<ViewTruth>,
}

/// Whether the target's peak pixel in `view` falls inside the ground-truth
/// box (boundary included).
pub fn localization_hit<T: Real>(result: &GroundingResult<T>, truth: &ViewTruth) -> Result<bool, EvalError> {
    let peak = result.view_peak(truth.view_id).ok_or(EvalError::MissingView(truth.view_id))?;
    let (u0, v0, u1, v1) = truth.bbox;
    Ok(peak.argmax_pixel.is_some_and(|(u, v)| {
        let (u, v) = (u as usize, v as usize);
        u0 <= u && u <= u1 && v0 <= v && v <= v1
    }))
}

pub fn mask_iou(a: &Bitmap, b: &Bitmap) -> f64 {
    let union = a.union_count(b);
    if union == 0 {
        return 0.0;
    }
    a.intersection_count(b) as f64 / union as f64
}

/// IoU of `{R > tau_bin}` within the selected target against the
/// ground-truth mask.
pub fn miou<T: Real>(result: &GroundingResult<T>, truth: &ViewTruth, tau_bin: f64) -> Result<f64, EvalError> {
    if truth.mask.is_empty() {
        return Err(EvalError::EmptyGroundTruth);
    }
    let map = result.target_map(truth.view_id).ok_or(EvalError::MissingView(truth.view_id))?;
    let tau: T = lit(tau_bin);
    let pred = match result.target.mask(truth.view_id) {
        Some(m) => Bitmap::from_fn(m.width, m.height, |u, v| m.get(u, v) && map.get(u, v) > tau),
        None => Bitmap::new(truth.mask.width, truth.mask.height),
    };
    Ok(mask_iou(&pred, &truth.mask))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub train: TrainConfig,
    pub ground: GroundConfig,
    pub tau_bin: f64,
    /// Norm of the per-view perturbation of mask embeddings.
    pub noise: f64,
    /// Pixels the target needs in a view for that view to be scored.
    pub min_visible: usize,
    pub vocab_seed: u64,
    /// Use `field.ckpt` when present instead of training.
    pub use_checkpoint: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            ground: GroundConfig::default(),
            tau_bin: 0.5,
            noise: 0.1,
            min_visible: 20,
            vocab_seed: Vocabulary::default().seed,
            use_checkpoint: true,
        }
    }
}

/// One scored (query, view) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseEntry {
    pub scene: String,
    pub query_id: String,
    pub text: String,
    pub view_id: u32,
    pub hit: bool,
    pub iou: f64,
    pub satisfied: bool,
    /// Error tag when the query could not be grounded.
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tau_bin: f64,
    pub scenes: usize,
    pub queries: usize,
    /// Fraction of entries with a hit, in `[0, 1]`.
    pub accuracy: f64,
    /// Mean IoU over entries, in `[0, 1]`.
    pub miou: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_runtime_s: Option<f64>,
    pub cases: Vec<CaseEntry>,
}

impl Report {
    pub fn from_entries(tau_bin: f64, scenes: usize, cases: Vec<CaseEntry>) -> Self {
        let n = cases.len().max(1) as f64;
        let mut queries: Vec<(&str, &str)> = cases.iter().map(|c| (c.scene.as_str(), c.query_id.as_str())).collect();
        queries.dedup();
        let runtimes: Vec<f64> = cases.iter().filter_map(|c| c.runtime_s).collect();
        Self {
            tau_bin,
            scenes,
            queries: queries.len(),
            accuracy: cases.iter().filter(|c| c.hit).count() as f64 / n,
            miou: cases.iter().map(|c| c.iou).sum::<f64>() / n,
            mean_runtime_s: (!runtimes.is_empty()).then(|| runtimes.iter().sum::<f64>() / runtimes.len() as f64),
            cases,
        }
    }

    /// Same report without wall-clock fields, so reruns compare byte-equal.
    pub fn canonical(&self) -> Self {
        let mut r = self.clone();
        r.mean_runtime_s = None;
        for c in &mut r.cases {
            c.runtime_s = None;
        }
        r
    }

    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(&self.canonical()).expect("report serializes")
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<12} {:<6} {:>4} {:>4} {:>6} {:>4}  query", "scene", "id", "view", "hit", "iou", "sat");
        for c in &self.cases {
            let _ = writeln!(
                s,
                "{:<12} {:<6} {:>4} {:>4} {:>6.3} {:>4}  {}{}",
                c.scene,
                c.query_id,
                c.view_id,
                if c.hit { "yes" } else { "no" },
                c.iou,
                if c.satisfied { "yes" } else { "no" },
                c.text,
                c.error.as_ref().map(|e| format!("  [{e}]")).unwrap_or_default()
            );
        }
        let _ = writeln!(
            s,
            "scenes {}  queries {}  entries {}  accuracy {:.1}%  mIoU {:.1}%  (tau_bin {})",
            self.scenes,
            self.queries,
            self.cases.len(),
            100.0 * self.accuracy,
            100.0 * self.miou,
            self.tau_bin
        );
        s
    }
}

/// Ground-truth cases for the annotated queries of `scene`.
pub fn query_cases<T: Real>(scene: &Scene<T>, queries: &[QueryText], min_visible: usize) -> Vec<QueryCase> {
    let views: Vec<_> = scene.cameras.iter().map(|c| render_view(scene, c)).collect();
    queries
        .iter()
        .filter_map(|q| {
            let Some(ann) = scene.annotations.iter().find(|a| a.query_id == q.query_id) else {
                warn!("query {} has no annotation", q.query_id);
                return None;
            };
            let truths = views
                .iter()
                .filter_map(|v| {
                    let mask = v.mask_of(ann.target_id);
                    if mask.count() < min_visible.max(1) {
                        return None;
                    }
                    let bbox = mask.bounding_box()?;
                    Some(ViewTruth {
                        view_id: v.view_id,
                        mask,
                        bbox,
                    })
                })
                .collect();
            Some(QueryCase {
                query_id: q.query_id.clone(),
                text: q.text.clone(),
                gt_target_id: ann.target_id,
                views: truths,
            })
        })
        .collect()
}

/// Trains (unless `field` is given) and scores every annotated query.
pub fn evaluate_scene<T: Real>(
    name: &str,
    scene: &Scene<T>,
    queries: &[QueryText],
    field: Option<FeatureField<T>>,
    config: &EvalConfig,
) -> Vec<CaseEntry> {
    let vocab = Vocabulary {
        seed: config.vocab_seed,
        ..Vocabulary::default()
    };
    let sampler = config.train.sampler();
    let views: Vec<_> = scene.cameras.iter().map(|c| render_view(scene, c)).collect();
    let sup = build_supervision(scene, &views, &vocab, lit(config.noise), &sampler);
    let cases = query_cases(scene, queries, config.min_visible);
    let fail_all = |tag: &str| -> Vec<CaseEntry> {
        cases
            .iter()
            .flat_map(|c| {
                c.views.iter().map(|v| CaseEntry {
                    scene: name.to_owned(),
                    query_id: c.query_id.clone(),
                    text: c.text.clone(),
                    view_id: v.view_id,
                    hit: false,
                    iou: 0.0,
                    satisfied: false,
                    error: Some(tag.to_owned()),
                    runtime_s: None,
                })
            })
            .collect()
    };
    let field = match field {
        Some(f) => f,
        None => match train_fields(scene, &sup, &config.train) {
            Ok((f, report)) => {
                info!("{name}: trained, loss {:.4} -> {:.4}", report.first_loss, report.final_loss);
                f
            }
            Err(e) => {
                warn!("{name}: training failed: {e}");
                return fail_all("train_failed");
            }
        },
    };
    let grounder = match Grounder::new(scene, &field, &sup.triplets, &vocab, config.ground.clone()) {
        Ok(g) => g,
        Err(e) => {
            warn!("{name}: {e}");
            return fail_all("ground_setup");
        }
    };
    let parser = Parser::with_vocabulary(&vocab);
    let mut out = Vec::new();
    for case in &cases {
        let start = Instant::now();
        let grounded = parser
            .parse(&case.text)
            .map_err(|e| format!("parse:{}", e.tag()))
            .and_then(|i| {
                grounder.ground(&case.query_id, &i).map_err(|e| match e {
                    crate::ground::GroundError::AnchorNotFound(_) => "anchor_not_found".to_owned(),
                    crate::ground::GroundError::TargetNotFound(_) => "target_not_found".to_owned(),
                    other => other.to_string(),
                })
            });
        let runtime = start.elapsed().as_secs_f64();
        for truth in &case.views {
            let entry = |hit, iou, satisfied, error| CaseEntry {
                scene: name.to_owned(),
                query_id: case.query_id.clone(),
                text: case.text.clone(),
                view_id: truth.view_id,
                hit,
                iou,
                satisfied,
                error,
                runtime_s: Some(runtime),
            };
            out.push(match &grounded {
                Ok(r) => {
                    let hit = localization_hit(r, truth).unwrap_or(false);
                    let iou = miou(r, truth, config.tau_bin).unwrap_or(0.0);
                    entry(hit, iou, r.satisfied, None)
                }
                Err(tag) => entry(false, 0.0, false, Some(tag.clone())),
            });
        }
    }
    out
}

/// Scene directories: `dir` itself if it holds a `scene.json`, otherwise
/// its subdirectories that do, sorted by name.
pub fn scene_dirs(dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    if dir.join("scene.json").is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let rd = std::fs::read_dir(dir).map_err(|source| IoError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut dirs: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("scene.json").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(EvalError::NoScenes(dir.to_path_buf()));
    }
    Ok(dirs)
}

pub fn run_benchmark(dir: &Path, config: &EvalConfig) -> Result<Report, EvalError> {
    let dirs = scene_dirs(dir)?;
    let mut entries = Vec::new();
    for d in &dirs {
        let name = d.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "scene".into());
        let scene: Scene<f64> = load_scene(&d.join("scene.json"))?;
        let queries: Vec<QueryText> = read_json(&d.join("queries.json"))?;
        let ckpt = d.join("field.ckpt");
        let field = if config.use_checkpoint && ckpt.is_file() {
            match load_checkpoint::<f64>(&ckpt) {
                Ok((f, _)) => Some(f),
                Err(e) => {
                    warn!("{name}: ignoring checkpoint: {e}");
                    None
                }
            }
        } else {
            None
        };
        entries.extend(evaluate_scene(&name, &scene, &queries, field, config));
    }
    Ok(Report::from_entries(config.tau_bin, dirs.len(), entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square(w: usize, u0: usize, u1: usize) -> Bitmap {
        Bitmap::from_fn(w, 4, |u, _| u0 <= u && u < u1)
    }

    #[test]
    fn iou_values() {
        let a = square(12, 0, 4);
        assert_eq!(mask_iou(&a, &a), 1.0);
        assert_eq!(mask_iou(&a, &square(12, 6, 10)), 0.0);
        // half overlap of equal areas: a / 3a
        assert!((mask_iou(&a, &square(12, 2, 6)) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(mask_iou(&square(12, 2, 6), &a), mask_iou(&a, &square(12, 2, 6)));
    }

    #[test]
    fn aggregates_are_means() {
        let e = |hit, iou| CaseEntry {
            scene: "s".into(),
            query_id: "q".into(),
            text: String::new(),
            view_id: 0,
            hit,
            iou,
            satisfied: true,
            error: None,
            runtime_s: Some(1.0),
        };
        let r = Report::from_entries(0.5, 1, vec![e(true, 1.0), e(false, 0.5)]);
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.miou, 0.75);
        let dup = Report::from_entries(0.5, 1, vec![e(true, 1.0), e(false, 0.5), e(true, 1.0), e(false, 0.5)]);
        assert_eq!((dup.accuracy, dup.miou), (r.accuracy, r.miou));
        assert!(!r.to_canonical_json().contains("runtime"));
    }

    proptest! {
        #[test]
        fn iou_is_bounded_and_symmetric(a in prop::collection::vec(any::<bool>(), 24), b in prop::collection::vec(any::<bool>(), 24)) {
            let (ma, mb) = (Bitmap::from_fn(6, 4, |u, v| a[v * 6 + u]), Bitmap::from_fn(6, 4, |u, v| b[v * 6 + u]));
            let iou = mask_iou(&ma, &mb);
            prop_assert!((0.0..=1.0).contains(&iou));
            prop_assert_eq!(iou, mask_iou(&mb, &ma));
        }

        #[test]
        fn duplicating_every_case_keeps_aggregates(cases in prop::collection::vec((any::<bool>(), 0.0f64..1.0), 1..30)) {
            let entries: Vec<CaseEntry> = cases
                .iter()
                .enumerate()
                .map(|(i, (hit, iou))| CaseEntry {
                    scene: "s".into(),
                    query_id: format!("q{}", i / 3),
                    text: String::new(),
                    view_id: (i % 3) as u32,
                    hit: *hit,
                    iou: *iou,
                    satisfied: true,
                    error: None,
                    runtime_s: None,
                })
                .collect();
            let once = Report::from_entries(0.5, 1, entries.clone());
            let twice = Report::from_entries(0.5, 1, [entries.clone(), entries].concat());
            prop_assert_eq!(once.accuracy, twice.accuracy);
            prop_assert!((once.miou - twice.miou).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&once.miou));
        }
    }
}
