//! Generates benchmark scenes and prints the evaluation table.
//!
//! `cargo run --release --example bench -- [scenes] [seed] [steps] [novp] [noig]`

use spatial_core::eval::{evaluate_scene, EvalConfig, Report};
use spatial_core::scene::generate::{benchmark_config, generate_scene};

fn main() {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let n = args.first().copied().unwrap_or(4);
    let seed = args.get(1).copied().unwrap_or(0);
    let mut cfg = EvalConfig::default();
    let flags: Vec<String> = std::env::args().skip(1).collect();
    cfg.train.use_vis_mod = !flags.iter().any(|f| f == "novp");
    cfg.ground.use_instance_graph = !flags.iter().any(|f| f == "noig");
    if let Some(steps) = args.get(2) {
        cfg.train.steps = *steps as usize;
    }
    let mut entries = Vec::new();
    for k in 0..n {
        let s = seed + k;
        let g = generate_scene(&benchmark_config(s), s).expect("scene");
        let t = std::time::Instant::now();
        entries.extend(evaluate_scene(&format!("scene{s:02}"), &g.scene, &g.queries, None, &cfg));
        eprintln!("scene {s}: {:.1}s", t.elapsed().as_secs_f64());
    }
    print!("{}", Report::from_entries(cfg.tau_bin, n as usize, entries).table());
}
