mod common;

use common::{facts, object, occlude};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use vqa3d_core::{sample_scene, Color, SceneConfig};
use vqa3d_reason::templates::question_metadata;
use vqa3d_reason::*;

#[test]
fn template_bank_sizes() {
    assert_eq!(templates_for(Family::Part).len(), 9);
    assert_eq!(templates_for(Family::Pose).len(), 17);
    assert_eq!(templates_for(Family::Occlusion).len() + templates_for(Family::OcclusionPart).len(), 35);
    let ids: BTreeSet<String> = all_templates().into_iter().map(|t| t.id).collect();
    assert_eq!(ids.len(), 61);
}

#[test]
fn part_of_object_program_shape() {
    // the red car must be told apart from a blue car and a red bus
    let f = facts(
        vec![object("sedan", Color::Red, 0.0), object("sedan", Color::Blue, 0.0), object("regular bus", Color::Red, 0.0)],
        &[(0, "front left door", Color::Green), (0, "hood", Color::Green), (1, "front left door", Color::Red)],
    );
    let t = all_templates().into_iter().find(|t| t.id == "part.part_of_object.color").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let expected = prog_of(&[
        ("scene", None),
        ("filter_color", Some("red")),
        ("filter_shape", Some("car")),
        ("unique", None),
        ("object_to_part", None),
        ("filter_shape", Some("front left door")),
        ("unique", None),
        ("query_color", None),
    ]);
    let mut seen = false;
    for _ in 0..400 {
        if let Some((p, text, answer, _)) = vqa3d_reason::instantiate(&t, &f, &mut rng) {
            if p == expected {
                assert_eq!(answer, "green");
                assert_eq!(text, "What is the color of the front left door of the red car?");
                seen = true;
            }
        }
    }
    assert!(seen);
}

fn prog_of(ops: &[(&str, Option<&str>)]) -> Program {
    let json: Vec<serde_json::Value> = ops
        .iter()
        .enumerate()
        .map(|(i, (op, arg))| {
            let inputs: Vec<usize> = if i == 0 { vec![] } else { vec![i - 1] };
            match arg {
                Some(a) => serde_json::json!({"op": op, "arg": a, "inputs": inputs}),
                None => serde_json::json!({"op": op, "inputs": inputs}),
            }
        })
        .collect();
    serde_json::from_value(serde_json::Value::Array(json)).unwrap()
}

fn scenes(count: u64) -> Vec<(u64, SceneFacts)> {
    let cfg = SceneConfig::default();
    (0..count).filter_map(|s| sample_scene(s, &cfg).ok().map(|sc| (s, SceneFacts::from_scene(&sc)))).collect()
}

#[test]
fn generator_self_audit() {
    let mut audited = 0;
    for (seed, f) in scenes(40) {
        for family in Family::ALL {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = generate_for_scene(&f, seed, family, &mut rng);
            assert!(g.questions.len() <= 10);
            assert_eq!(g.short, g.questions.len() < 8);
            for q in &g.questions {
                assert_eq!(q.family, family);
                assert!(check_well_posed(&q.program, &f), "{}", q.text);
                assert!(check_no_redundancy(&q.program, &f), "{}", q.text);
                assert_eq!(oracle_execute(&q.program, &f).unwrap(), q.answer);
                let run = oracle_run(&q.program, &f).unwrap();
                assert_eq!(question_metadata(&f, &run.referents), q.metadata);
                audited += 1;
            }
        }
    }
    assert!(audited >= 1000, "{audited}");
}

#[test]
fn generation_is_deterministic() {
    let (seed, f) = scenes(1).remove(0);
    let a = generate_for_scene(&f, seed, Family::OcclusionPart, &mut ChaCha8Rng::seed_from_u64(9));
    let b = generate_for_scene(&f, seed, Family::OcclusionPart, &mut ChaCha8Rng::seed_from_u64(9));
    assert_eq!(a, b);
}

#[test]
fn occlusion_free_scene_gives_no_occlusion_questions() {
    let f = facts(
        vec![object("sedan", Color::Red, 0.0), object("jet", Color::Blue, 90.0), object("suv", Color::Gray, 180.0)],
        &[(0, "hood", Color::Gray), (1, "left wing", Color::Red)],
    );
    for family in [Family::Occlusion, Family::OcclusionPart] {
        let g = generate_for_scene(&f, 0, family, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(g.short);
        assert!(g.questions.iter().all(|q| !q.program.iter().any(|o| o.op == Op::FilterOccludee && q.answer != "no")));
    }
    let g = generate_for_scene(&f, 0, Family::Occlusion, &mut ChaCha8Rng::seed_from_u64(1));
    assert!(g.questions.is_empty());
}

#[test]
fn five_object_scene_gets_eight_to_ten_questions() {
    let cfg = SceneConfig {
        min_objects: 5,
        max_objects: 5,
        ..SceneConfig::default()
    };
    let scene = (0..20).find_map(|s| sample_scene(s, &cfg).ok()).unwrap();
    let f = SceneFacts::from_scene(&scene);
    for family in [Family::Part, Family::Pose] {
        let g = generate_for_scene(&f, 0, family, &mut ChaCha8Rng::seed_from_u64(2));
        assert!((8..=10).contains(&g.questions.len()), "{family}: {}", g.questions.len());
    }
}

#[test]
fn metadata_tracks_referenced_entities() {
    let mut f = facts(
        vec![object("sedan", Color::Red, 0.0), object("jet", Color::Blue, 0.0)],
        &[(0, "hood", Color::Gray)],
    );
    occlude(&mut f, 0, 1, 0.3);
    f.parts[0].visible_area = 37;
    let m = question_metadata(&f, &[(Domain::Objects, 1), (Domain::Parts, 0)]);
    assert_eq!(m.min_occlusion, 0.0);
    assert_eq!(m.max_part_area, Some(37));
    let m = question_metadata(&f, &[(Domain::Parts, 0)]);
    assert!((m.min_occlusion - 0.3).abs() < 1e-12);
}

#[test]
fn questions_round_trip_through_json() {
    let (seed, f) = scenes(1).remove(0);
    let g = generate_for_scene(&f, seed, Family::Part, &mut ChaCha8Rng::seed_from_u64(4));
    let json = serde_json::to_string(&g.questions).unwrap();
    let back: Vec<Question> = serde_json::from_str(&json).unwrap();
    assert_eq!(back, g.questions);
    assert!(json.contains("\"family\":\"part\""));
}
