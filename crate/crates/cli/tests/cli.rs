use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;
use tempfile::TempDir;

fn spatial(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spatial"))
        .args(args)
        .env_remove("SPATIAL_THREADS")
        .output()
        .expect("spawn spatial")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gen(dir: &Path, seed: u64) {
    let o = spatial(&["gen", p(dir), "--seed", &seed.to_string()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

/// Benchmark scene 3, fully trained once for all tests that need a field.
fn trained() -> &'static (TempDir, Value) {
    static FIXTURE: OnceLock<(TempDir, Value)> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let tmp = TempDir::new().unwrap();
        let dir = tmp.path().join("scene03");
        gen(&dir, 3);
        let o = spatial(&["train", p(&dir)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
        (tmp, report)
    })
}

fn trained_dir() -> PathBuf {
    trained().0.path().join("scene03")
}

#[test]
fn gen_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    gen(&a, 11);
    gen(&b, 11);
    for f in ["scene.json", "queries.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let queries: Value = serde_json::from_slice(&std::fs::read(a.join("queries.json")).unwrap()).unwrap();
    assert_eq!(queries.as_array().unwrap().len(), 4);
}

#[test]
fn gen_spec_with_two_relations() {
    let tmp = TempDir::new().unwrap();
    let spec = tmp.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{
            "objects": [{"category": "book", "count": 2}],
            "relations": [
                {"target": "book", "anchor": "chair", "relation": {"class": "Support", "subtype": "SupportedBy"}},
                {"target": "ball", "anchor": "mug", "relation": {"class": "HorizontalProximity", "subtype": "Near"}}
            ]
        }"#,
    )
    .unwrap();
    let out = tmp.path().join("s");
    let o = spatial(&["gen", p(&out), "--seed", "4", "--spec", p(&spec)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let queries: Value = serde_json::from_slice(&std::fs::read(out.join("queries.json")).unwrap()).unwrap();
    assert!(queries.as_array().unwrap().len() >= 2);
}

#[test]
fn malformed_spec_exits_2() {
    let tmp = TempDir::new().unwrap();
    let spec = tmp.path().join("spec.json");
    std::fs::write(&spec, r#"{"relations": [{"target": "book"}]}"#).unwrap();
    let o = spatial(&["gen", p(&tmp.path().join("s")), "--spec", p(&spec)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("relations[0]"), "{}", stderr(&o));
}

#[test]
fn unsatisfiable_spec_exits_2() {
    let tmp = TempDir::new().unwrap();
    let spec = tmp.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"objects": [{"category": "bed", "count": 12}], "max_retries": 3}"#,
    )
    .unwrap();
    let o = spatial(&["gen", p(&tmp.path().join("s")), "--spec", p(&spec)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn config_precedence() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.json");
    std::fs::write(&cfg, r#"{"seed": 5}"#).unwrap();
    let read = |d: &Path| std::fs::read(d.join("scene.json")).unwrap();

    let from_file = tmp.path().join("file");
    assert_eq!(code(&spatial(&["--config", p(&cfg), "gen", p(&from_file)])), 0);
    let direct = tmp.path().join("direct");
    gen(&direct, 5);
    assert_eq!(read(&from_file), read(&direct));

    let flagged = tmp.path().join("flag");
    assert_eq!(code(&spatial(&["--config", p(&cfg), "gen", p(&flagged), "--seed", "6"])), 0);
    let six = tmp.path().join("six");
    gen(&six, 6);
    assert_eq!(read(&flagged), read(&six));

    let default = tmp.path().join("default");
    assert_eq!(code(&spatial(&["gen", p(&default)])), 0);
    let zero = tmp.path().join("zero");
    gen(&zero, 0);
    assert_eq!(read(&default), read(&zero));
}

#[test]
fn invalid_config_reports_the_field() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.json");
    std::fs::write(&cfg, r#"{"ground": {"tau": 1.5}}"#).unwrap();
    let o = spatial(&["--config", p(&cfg), "gen", p(&tmp.path().join("s"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("ground"), "{}", stderr(&o));
    assert!(!tmp.path().join("s").exists(), "validation must precede any work");

    std::fs::write(&cfg, r#"{"train": {"steps": -3}}"#).unwrap();
    let o = spatial(&["--config", p(&cfg), "gen", p(&tmp.path().join("s"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("train.steps"), "{}", stderr(&o));
}

#[test]
fn threads_flag_and_env() {
    let tmp = TempDir::new().unwrap();
    let o = spatial(&["--threads", "0", "gen", p(&tmp.path().join("a"))]);
    assert_eq!(code(&o), 2);
    let o = Command::new(env!("CARGO_BIN_EXE_spatial"))
        .args(["gen", p(&tmp.path().join("b"))])
        .env("SPATIAL_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2, "env fallback is honored");
    let o = Command::new(env!("CARGO_BIN_EXE_spatial"))
        .args(["--threads", "1", "gen", p(&tmp.path().join("c"))])
        .env("SPATIAL_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "flag wins over env: {}", stderr(&o));
}

#[test]
fn train_missing_scene_exits_2() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&spatial(&["train", p(tmp.path())])), 2);
}

#[test]
fn train_resume_is_a_documented_error() {
    let tmp = TempDir::new().unwrap();
    gen(tmp.path(), 1);
    let o = spatial(&["train", p(tmp.path()), "--resume"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("not supported"));
    assert!(!tmp.path().join("field.ckpt").exists());
}

#[test]
fn zero_steps_writes_an_untrained_checkpoint() {
    let tmp = TempDir::new().unwrap();
    gen(tmp.path(), 1);
    let o = spatial(&["train", p(tmp.path()), "--steps", "0"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["steps"], 0);
    assert!(report["final_loss"].is_null(), "no step was taken: {report}");
    assert!(tmp.path().join("field.ckpt").is_file());
}

#[test]
fn ground_without_checkpoint_exits_2() {
    let tmp = TempDir::new().unwrap();
    gen(tmp.path(), 1);
    let o = spatial(&["ground", p(tmp.path()), "--query", "the book on the chair"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("checkpoint"));
}

#[test]
fn training_lowers_the_loss() {
    let report = &trained().1;
    assert_eq!(report["steps"], 2000);
    assert!(report["final_loss"].as_f64().unwrap() < report["first_loss"].as_f64().unwrap(), "{report}");
}

#[test]
fn demo_query_is_satisfied() {
    let dir = trained_dir();
    let maps = dir.join("demo_maps");
    let o = spatial(&[
        "ground",
        p(&dir),
        "--query",
        "where is the apple that is on the bench?",
        "--out",
        p(&maps),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let result: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(result["satisfied"], true);
    assert_eq!(result["instruction"]["target"], "apple");
    assert_eq!(result["per_view"].as_array().unwrap().len(), 3);
    for v in 0..3 {
        let pgm = std::fs::read(maps.join(format!("target_view{v}.pgm"))).unwrap();
        assert!(pgm.starts_with(b"P5"));
        assert!(maps.join(format!("anchor_view{v}.pgm")).is_file());
    }
}

#[test]
fn ground_single_view() {
    let dir = trained_dir();
    let maps = dir.join("view1_maps");
    let o = spatial(&["ground", p(&dir), "--query", "the apple on the bench", "--view", "1", "--out", p(&maps)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let result: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let per_view = result["per_view"].as_array().unwrap();
    assert_eq!(per_view.len(), 1);
    assert_eq!(per_view[0]["view_id"], 1);
    let names: Vec<_> = std::fs::read_dir(&maps).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 2);
}

#[test]
fn unknown_relation_word_exits_3() {
    let o = spatial(&["ground", p(&trained_dir()), "--query", "the apple alongside the bench"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn view_out_of_range_exits_2() {
    let o = spatial(&["ground", p(&trained_dir()), "--query", "the apple on the bench", "--view", "3"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn missing_concept_exits_4() {
    let o = spatial(&["ground", p(&trained_dir()), "--query", "the carpet near the apple"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn eval_uses_the_checkpoint() {
    let o = spatial(&["eval", p(trained().0.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    let json_end = out.find("\n}\n").expect("report json") + 2;
    let report: Value = serde_json::from_str(&out[..json_end]).unwrap();
    assert_eq!(report["scenes"], 1);
    assert_eq!(report["queries"], 4);
    assert!(out[json_end..].contains("accuracy"));
}

#[test]
fn render_writes_every_view() {
    let tmp = TempDir::new().unwrap();
    gen(tmp.path(), 2);
    let o = spatial(&["render", p(tmp.path())]);
    assert_eq!(code(&o), 0);
    for v in 0..3 {
        assert!(std::fs::read(tmp.path().join(format!("views/rgb_view{v}.ppm"))).unwrap().starts_with(b"P6"));
        assert!(std::fs::read(tmp.path().join(format!("views/depth_view{v}.pgm"))).unwrap().starts_with(b"P5"));
    }
}
