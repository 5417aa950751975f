use std::path::Path;
use std::process::Command;

use vqa3d_cli::commands::{load_questions, PREDICTIONS_FILE, QUESTIONS_FILE, REPORT_CSV, REPORT_FILE, REPRESENTATIONS_FILE};
use vqa3d_cli::pipeline::{derive_seed, PipelineVariant};
use vqa3d_cli::{cmd_answer, cmd_eval, cmd_gen, cmd_parse, Noise, RunOptions};
use vqa3d_parser::Variant;
use vqa3d_reason::Family;

fn opts(dir: &Path, scenes: usize) -> RunOptions {
    RunOptions {
        seed: 11,
        scenes,
        noise: Noise::default(),
        families: Family::ALL.to_vec(),
        out: dir.to_path_buf(),
    }
}

fn run_all(o: &RunOptions, variant: PipelineVariant) -> Vec<Vec<u8>> {
    cmd_gen(o).unwrap();
    cmd_parse(o, variant).unwrap();
    cmd_answer(o).unwrap();
    cmd_eval(o).unwrap();
    [QUESTIONS_FILE, REPRESENTATIONS_FILE, PREDICTIONS_FILE, REPORT_FILE, REPORT_CSV]
        .iter()
        .map(|f| std::fs::read(o.out.join(f)).unwrap())
        .collect()
}

#[test]
fn derived_seeds_are_stable_and_distinct() {
    assert_eq!(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
    let mut seen = std::collections::HashSet::new();
    for stream in 0..4 {
        for index in 0..256 {
            assert!(seen.insert(derive_seed(7, stream, index)));
        }
    }
    assert_ne!(derive_seed(7, 1, 0), derive_seed(8, 1, 0));
}

#[test]
fn variant_names_round_trip() {
    for v in PipelineVariant::all() {
        assert_eq!(v.name().parse::<PipelineVariant>().unwrap(), v);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<PipelineVariant>(&json).unwrap(), v);
    }
    let err = "no-such".parse::<PipelineVariant>().unwrap_err().to_string();
    for v in PipelineVariant::all() {
        assert!(err.contains(v.name()), "{err}");
    }
}

#[test]
fn oracle_pipeline_is_exact_and_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = run_all(&opts(a.path(), 8), PipelineVariant::Oracle);
    let fb = run_all(&opts(b.path(), 8), PipelineVariant::Oracle);
    assert_eq!(fa, fb);
    let report: serde_json::Value = serde_json::from_slice(&fa[3]).unwrap();
    assert_eq!(report["accuracy"], 1.0);
}

#[test]
fn parsed_pipeline_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let v = PipelineVariant::Parser(Variant::Full);
    assert_eq!(run_all(&opts(a.path(), 2), v), run_all(&opts(b.path(), 2), v));
}

#[test]
fn predictions_trace_to_questions_and_scenes() {
    let dir = tempfile::tempdir().unwrap();
    let o = opts(dir.path(), 3);
    cmd_gen(&o).unwrap();
    cmd_parse(&o, PipelineVariant::Oracle).unwrap();
    let preds = cmd_answer(&o).unwrap();
    let q = load_questions(dir.path()).unwrap();
    assert_eq!(preds.predictions.len(), q.questions.len());
    for (p, q) in preds.predictions.iter().zip(&q.questions) {
        assert_eq!((&p.question, p.scene), (&q.id, q.scene));
        assert!(p.scene < 3);
    }
}

#[test]
fn schema_mismatch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let o = opts(dir.path(), 2);
    cmd_gen(&o).unwrap();
    let path = dir.path().join(QUESTIONS_FILE);
    let text = std::fs::read_to_string(&path).unwrap().replace("vqa3d.questions/v1", "vqa3d.questions/v0");
    std::fs::write(&path, text).unwrap();
    let err = format!("{:#}", load_questions(dir.path()).unwrap_err());
    assert!(err.contains("vqa3d.questions/v0") && err.contains("vqa3d.questions/v1"), "{err}");
}

fn vqa3d(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_vqa3d"))
        .arg("--out")
        .arg(dir)
        .args(args)
        .env_remove("VQA3D_SEED")
        .output()
        .unwrap()
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = vqa3d(dir.path(), &["--scenes", "3", "--families", "pose,part", "gen"]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let q = load_questions(dir.path()).unwrap();
    assert_eq!(q.families, [Family::Pose, Family::Part]);

    assert!(!vqa3d(dir.path(), &["answer"]).status.success(), "answer before parse must fail");
    let bad = vqa3d(dir.path(), &["--scenes", "3", "parse", "--variant", "nope"]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("no-3d-nms"));
    assert!(!vqa3d(dir.path(), &["--families", "colour", "gen"]).status.success());
    assert!(!vqa3d(dir.path(), &["--noise-attr", "2", "gen"]).status.success());

    for step in [&["--scenes", "3", "parse", "--variant", "oracle-representation"][..], &["answer"], &["eval"]] {
        let out = vqa3d(dir.path(), step);
        assert!(out.status.success(), "{step:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn seed_env_var_mirrors_flag() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let flag = vqa3d(a.path(), &["--seed", "42", "--scenes", "2", "gen"]);
    let env = Command::new(env!("CARGO_BIN_EXE_vqa3d"))
        .args(["--scenes", "2", "gen"])
        .env("VQA3D_SEED", "42")
        .env("VQA3D_OUT", b.path())
        .output()
        .unwrap();
    assert!(flag.status.success() && env.status.success());
    assert_eq!(
        std::fs::read(a.path().join(QUESTIONS_FILE)).unwrap(),
        std::fs::read(b.path().join(QUESTIONS_FILE)).unwrap()
    );
}
