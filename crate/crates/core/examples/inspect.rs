//! Prints every stage of grounding for one generated benchmark scene.
//!
//! `cargo run --release --example inspect -- <seed> [out_dir]`

use std::collections::BTreeMap;

use spatial_core::embed::Vocabulary;
use spatial_core::eval::EvalConfig;
use spatial_core::field::{build_supervision, train_fields};
use spatial_core::ground::Grounder;
use spatial_core::parse::parse_query;
use spatial_core::scene::generate::{benchmark_config, generate_scene};
use spatial_core::scene::render_view;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seed: u64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(0);
    let out = args.get(1).cloned();
    let cfg = EvalConfig::default();
    let g = generate_scene(&benchmark_config(seed), seed).unwrap();
    let scene = &g.scene;
    for p in &scene.primitives {
        let b = p.aabb();
        println!(
            "#{:<2} {:<10} {:?} min {:.2?} max {:.2?}",
            p.id, p.category, p.shape, b.min.to_array(), b.max.to_array()
        );
    }
    let vocab = Vocabulary::default();
    let views: Vec<_> = scene.cameras.iter().map(|c| render_view(scene, c)).collect();
    let sup = build_supervision(scene, &views, &vocab, cfg.noise, &cfg.train.sampler());
    let (field, rep) = train_fields(scene, &sup, &cfg.train).unwrap();
    println!("{rep:?}");
    println!("edges {:?}", field.language.scale_edges);
    for t in &sup.triplets {
        println!(
            "  triplet view {} #{} {} scale {:.3} level {}",
            t.mask.view_id, t.mask.instance_id, t.category, t.scale,
            field.language.level_for_scale(t.scale)
        );
    }
    let grounder = Grounder::new(scene, &field, &sup.triplets, &vocab, cfg.ground.clone()).unwrap();
    for q in &g.queries {
        let ann = scene.annotations.iter().find(|a| a.query_id == q.query_id).unwrap();
        let instr = parse_query(&q.text).unwrap();
        println!("\n== {} '{}' gt target #{} anchor #{}", q.query_id, q.text, ann.target_id, ann.anchor_id);
        for (role, token) in [("target", &instr.target), ("anchor", &instr.anchor)] {
            let s = grounder.search(token);
            println!(" {role} {token}: scale {:.3} level {} candidates {} rejected {}", s.scale, field.language.level_for_scale(s.scale), s.candidates.len(), s.rejected);
            for (i, c) in s.candidates.iter().enumerate() {
                let view = &views[c.view_id as usize];
                let mut ids: BTreeMap<i64, usize> = BTreeMap::new();
                for &(u, v) in &c.region.pixels {
                    *ids.entry(view.instance_at(u as usize, v as usize)).or_default() += 1;
                }
                let fnorm: f64 = c.feature.iter().map(|x| x * x).sum::<f64>().sqrt();
                println!(
                    "   c{i} view {} px {} peak {:.3} at {:?} on #{} pt {:.2?} |f| {:.2} ids {:?}",
                    c.view_id, c.region.len(), c.peak_relevance, c.peak_pixel,
                    view.instance_at(c.peak_pixel.0 as usize, c.peak_pixel.1 as usize),
                    c.point3d.to_array(), fnorm, ids
                );
            }
            for m in &s.merged {
                println!(
                    "   merged {:?} rel {:.3} aabb {:.2?}..{:.2?}",
                    m.component, m.mean_relevance, m.aabb3d.min.to_array(), m.aabb3d.max.to_array()
                );
            }
            if let Some(dir) = &out {
                for m in &s.maps {
                    std::fs::write(format!("{dir}/{}_{role}_v{}.pgm", q.query_id, m.view_id), m.to_pgm()).unwrap();
                }
            }
        }
        match grounder.ground(&q.query_id, &instr) {
            Ok(r) => println!(" -> satisfied {} target {:?} anchor {:?} peaks {:?}", r.satisfied, r.target.component, r.anchor.component, r.per_view),
            Err(e) => println!(" -> error {e}"),
        }
    }
}
