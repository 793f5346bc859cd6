//! `spatial`: generate synthetic scenes, train feature fields, ground
//! queries and run the benchmark.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | unexpected internal error |
//! | 2 | input or configuration error (bad flag, file, config field, unsatisfiable scene spec) |
//! | 3 | query parse error |
//! | 4 | grounding failure (no candidate for the target or anchor) |

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser as ClapParser, Subcommand};
use log::info;
use spatial_core::eval::{run_benchmark, Report};
use spatial_core::field::{build_supervision, load_checkpoint, save_checkpoint, train_fields};
use spatial_core::ground::{GroundError, Grounder};
use spatial_core::parse::{ParseError, Parser};
use spatial_core::scene::generate::{benchmark_config, generate_scene};
use spatial_core::scene::io::{depth_pgm, encode_pgm, load_scene, quantize, rgb_ppm, save_scene, write_bytes, write_json};
use spatial_core::scene::{render_view, GenConfig};
use spatial_core::{RelevanceMap, RenderedView, Scene};

use config::RunConfig;

#[derive(ClapParser, Debug)]
#[command(name = "spatial", version, about = "Open-vocabulary 3D grounding with spatial relations")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Worker threads; falls back to SPATIAL_THREADS, then to all cores.
    #[arg(long, global = true, env = "SPATIAL_THREADS")]
    threads: Option<usize>,
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate scene.json and queries.json.
    Gen {
        out_dir: PathBuf,
        /// Generator constraints (objects, relations, cameras) as JSON;
        /// defaults to the benchmark layout for the seed.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Train the feature fields and write field.ckpt.
    Train {
        scene_dir: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        /// Not supported; training always starts from a fresh field.
        #[arg(long)]
        resume: bool,
    },
    /// Ground one query; prints the result and writes relevance maps.
    Ground {
        scene_dir: PathBuf,
        #[arg(long)]
        query: String,
        /// Only write maps for this view.
        #[arg(long)]
        view: Option<u32>,
        /// Directory for the maps; defaults to <scene_dir>/maps.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate every scene under a dataset directory.
    Eval {
        dataset_dir: PathBuf,
        /// Ignore field.ckpt files and train from scratch.
        #[arg(long)]
        retrain: bool,
    },
    /// Write color and depth images of every view.
    Render {
        scene_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error("{0:#}")]
    Input(anyhow::Error),
    #[error("parse error ({tag}): {0}", tag = .0.tag())]
    Parse(ParseError),
    #[error("grounding failed: {0}")]
    Ground(GroundError),
    #[error("{0:#}")]
    Internal(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Internal(_) => 1,
            Failure::Input(_) => 2,
            Failure::Parse(_) => 3,
            Failure::Ground(_) => 4,
        }
    }
}

fn input<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Input(e.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = RunConfig::load(cli.global.config.as_deref()).map_err(input)?;
    if let Some(s) = cli.global.seed {
        cfg.seed = s;
    }
    if let Command::Train { steps: Some(n), .. } = &cli.cmd {
        cfg.train.steps = *n;
    }
    cfg.propagate_seed();
    cfg.validate().map_err(input)?;
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(input(anyhow!("--threads must be positive")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Internal(e.into()))?;
    }
    match cli.cmd {
        Command::Gen { out_dir, spec } => cmd_gen(&cfg, &out_dir, spec.as_deref()),
        Command::Train { scene_dir, resume, .. } => cmd_train(&cfg, &scene_dir, resume),
        Command::Ground {
            scene_dir,
            query,
            view,
            out,
        } => cmd_ground(&cfg, &scene_dir, &query, view, out),
        Command::Eval { dataset_dir, retrain } => cmd_eval(&cfg, &dataset_dir, retrain),
        Command::Render { scene_dir, out } => cmd_render(&scene_dir, out),
    }
}

fn read_gen_spec(path: &Path) -> anyhow::Result<GenConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        anyhow!("{}: {at}: {}", path.display(), e.into_inner())
    })
}

fn cmd_gen(cfg: &RunConfig, out_dir: &Path, spec: Option<&Path>) -> Result<(), Failure> {
    let gen = match spec {
        Some(p) => read_gen_spec(p).map_err(input)?,
        None => benchmark_config(cfg.seed),
    };
    let g = generate_scene(&gen, cfg.seed).map_err(input)?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))
        .map_err(input)?;
    save_scene(&out_dir.join("scene.json"), &g.scene).map_err(input)?;
    write_json(&out_dir.join("queries.json"), &g.queries).map_err(input)?;
    for q in &g.queries {
        println!("{}\t{}", q.query_id, q.text);
    }
    Ok(())
}

fn load_scene_dir(dir: &Path) -> Result<Scene, Failure> {
    load_scene(&dir.join("scene.json")).map_err(input)
}

fn views(scene: &Scene) -> Vec<RenderedView> {
    scene.cameras.iter().map(|c| render_view(scene, c)).collect()
}

fn cmd_train(cfg: &RunConfig, dir: &Path, resume: bool) -> Result<(), Failure> {
    if resume {
        return Err(input(anyhow!(
            "--resume is not supported: the optimizer state is not checkpointed, so training always starts fresh"
        )));
    }
    let scene = load_scene_dir(dir)?;
    let vocab = cfg.vocabulary();
    let sup = build_supervision(&scene, &views(&scene), &vocab, cfg.noise, &cfg.train.sampler());
    let (field, report) = train_fields(&scene, &sup, &cfg.train).map_err(input)?;
    save_checkpoint(&dir.join("field.ckpt"), &field, Some(&cfg.train)).map_err(|e| Failure::Internal(e.into()))?;
    info!("wrote {}", dir.join("field.ckpt").display());
    println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Failure::Internal(e.into()))?);
    Ok(())
}

fn map_pgm(map: &RelevanceMap) -> Vec<u8> {
    encode_pgm(map.width, map.height, &quantize(&map.values, 0.0, 1.0))
}

fn cmd_ground(cfg: &RunConfig, dir: &Path, query: &str, view: Option<u32>, out: Option<PathBuf>) -> Result<(), Failure> {
    let scene = load_scene_dir(dir)?;
    if let Some(v) = view {
        if scene.camera(v).is_none() {
            return Err(input(anyhow!("--view {v} is out of range: the scene has {} views", scene.cameras.len())));
        }
    }
    let vocab = cfg.vocabulary();
    let instruction = Parser::with_vocabulary(&vocab).parse(query).map_err(Failure::Parse)?;
    let ckpt = dir.join("field.ckpt");
    if !ckpt.is_file() {
        return Err(input(anyhow!("missing checkpoint {}; run `spatial train` first", ckpt.display())));
    }
    let (field, trained_with) = load_checkpoint::<f64>(&ckpt).map_err(input)?;
    // scale selection needs the supervision the field was trained with
    let sampler = trained_with.as_ref().unwrap_or(&cfg.train).sampler();
    let sup = build_supervision(&scene, &views(&scene), &vocab, cfg.noise, &sampler);
    let grounder = Grounder::new(&scene, &field, &sup.triplets, &vocab, cfg.ground.clone()).map_err(input)?;
    let result = grounder.ground("q0", &instruction).map_err(Failure::Ground)?;

    let out = out.unwrap_or_else(|| dir.join("maps"));
    std::fs::create_dir_all(&out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(input)?;
    let wanted = |id: u32| view.is_none_or(|v| v == id);
    for (role, maps) in [("target", &result.target_maps), ("anchor", &result.anchor_maps)] {
        for m in maps.iter().filter(|m| wanted(m.view_id)) {
            write_bytes(&out.join(format!("{role}_view{}.pgm", m.view_id)), &map_pgm(m)).map_err(input)?;
        }
    }
    let mut json = result.to_json();
    if let Some(v) = view {
        if let Some(per_view) = json.get_mut("per_view").and_then(|p| p.as_array_mut()) {
            per_view.retain(|p| p["view_id"] == v);
        }
    }
    println!("{}", serde_json::to_string_pretty(&json).map_err(|e| Failure::Internal(e.into()))?);
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, dir: &Path, retrain: bool) -> Result<(), Failure> {
    let mut ec = cfg.eval_config();
    ec.use_checkpoint = !retrain;
    let report: Report = run_benchmark(dir, &ec).map_err(input)?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Failure::Internal(e.into()))?);
    print!("{}", report.table());
    Ok(())
}

fn cmd_render(dir: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let scene = load_scene_dir(dir)?;
    let out = out.unwrap_or_else(|| dir.join("views"));
    std::fs::create_dir_all(&out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(input)?;
    for v in views(&scene) {
        write_bytes(&out.join(format!("rgb_view{}.ppm", v.view_id)), &rgb_ppm(&v)).map_err(input)?;
        write_bytes(&out.join(format!("depth_view{}.pgm", v.view_id)), &depth_pgm(&v)).map_err(input)?;
    }
    Ok(())
}
