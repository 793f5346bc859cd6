//! Open-vocabulary 3D grounding with spatial relations over synthetic scenes.
//!
//! A scene of analytic primitives stands in for a reconstructed radiance
//! field. Language and instance feature fields are distilled into voxel
//! pyramids from per-mask concept embeddings, and queries such as
//! "the book on the chair" are answered by relevance maps, an instance graph
//! that fuses candidates across views, and a geometric relation check.
//!
//! Everything numeric is generic over [`real::Real`]; the aliases below fix
//! the scalar to `f64`.

pub mod embed;
pub mod eval;
pub mod field;
pub mod geom;
pub mod ground;
pub mod parse;
pub mod real;
pub mod scene;

pub use real::Real;

pub type Vec3 = geom::Vec3<f64>;
pub type Aabb = geom::Aabb<f64>;
pub type Ray = geom::Ray<f64>;
pub type Pose = geom::Pose<f64>;
pub type Scene = scene::Scene<f64>;
pub type Primitive = scene::Primitive<f64>;
pub type CameraView = scene::CameraView<f64>;
pub type RenderedView = scene::RenderedView<f64>;
pub type FeatureField = field::FeatureField<f64>;
pub type ScalePyramid = field::ScalePyramid<f64>;
pub type Sampler = field::Sampler<f64>;
pub type Supervision = field::Supervision<f64>;
pub type SupervisionTriplet = field::SupervisionTriplet<f64>;
pub type ConceptEmbedding = embed::ConceptEmbedding<f64>;
pub type QueryContext = embed::QueryContext<f64>;
pub type RelevanceMap = ground::RelevanceMap<f64>;
pub type Candidate = ground::Candidate<f64>;
pub type MergedCandidate = ground::MergedCandidate<f64>;
pub type GroundingResult = ground::GroundingResult<f64>;
