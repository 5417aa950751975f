//! Exhaustive agreement check between the probabilistic executor on one-hot
//! representations and the symbolic oracle.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vqa3d_core::{Color, Material, Size, Subtype};

use crate::executor::execute;
use crate::facts::{FactObject, FactPart, SceneFacts};
use crate::oracle::oracle_execute;
use crate::templates::{all_templates, instantiate};

const SUBTYPES: [&str; 4] = ["sedan", "suv", "regular bus", "jet"];
const PARTS_PER_OBJECT: usize = 3;
const EDGE_SCORE: f64 = 0.5;

/// Small scene whose object-level occlusion graph is the bit pattern
/// `topology` over the `n·(n−1)` ordered pairs; every other attribute is
/// drawn from a generator seeded by `(n, topology, seed)`.
pub fn small_scene(n: usize, topology: u64, seed: u64) -> SceneFacts {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (n as u64) << 40 ^ topology);
    let objects: Vec<FactObject> = (0..n)
        .map(|_| FactObject {
            subtype: Subtype::from_name(SUBTYPES.choose(&mut rng).unwrap()).unwrap(),
            color: *[Color::Red, Color::Blue].choose(&mut rng).unwrap(),
            material: *Material::ALL.choose(&mut rng).unwrap(),
            size: *Size::ALL.choose(&mut rng).unwrap(),
            azimuth: (rng.random_range(0..24) as f64 * 15.0).to_radians(),
            occlusion: 0.0,
        })
        .collect();
    let mut parts = Vec::new();
    for (i, o) in objects.iter().enumerate() {
        for name in o.subtype.parts().iter().take(PARTS_PER_OBJECT) {
            parts.push(FactPart {
                owner: i,
                name: name.to_string(),
                color: *[Color::Red, Color::Blue, Color::Gray].choose(&mut rng).unwrap(),
                material: *Material::ALL.choose(&mut rng).unwrap(),
                visible_area: 10,
            });
        }
    }
    let mut s = vec![vec![0.0; n]; n + parts.len()];
    let mut bit = 0;
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            if topology >> bit & 1 == 1 {
                s[i][j] = EDGE_SCORE;
                for (k, p) in parts.iter().enumerate() {
                    if p.owner == i && rng.random_bool(0.5) {
                        s[n + k][j] = EDGE_SCORE;
                    }
                }
            }
            bit += 1;
        }
    }
    let mut facts = SceneFacts { objects, parts, s };
    for i in 0..n {
        facts.objects[i].occlusion = facts.occlusion_sum(i).min(1.0);
    }
    facts
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReductionReport {
    pub scenes: usize,
    pub programs: usize,
    /// Template ids that produced at least one program.
    pub templates_exercised: usize,
    pub templates_total: usize,
    /// Human-readable description of each disagreement.
    pub mismatches: Vec<String>,
}

/// Instantiates every template on every occlusion topology of every scene
/// size up to `max_objects`, and compares the executor's argmax answer on
/// the one-hot representation against the oracle.
pub fn one_hot_reduction(max_objects: usize, tries: usize, seed: u64) -> ReductionReport {
    let templates = all_templates();
    let mut exercised = vec![false; templates.len()];
    let mut report = ReductionReport {
        templates_total: templates.len(),
        ..Default::default()
    };
    for n in 1..=max_objects {
        let edges = n * (n - 1);
        for topology in 0..1u64 << edges {
            let facts = small_scene(n, topology, seed);
            let rep = facts.to_representation();
            report.scenes += 1;
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(topology).wrapping_mul(n as u64 + 1));
            for (ti, t) in templates.iter().enumerate() {
                for _ in 0..tries {
                    let Some((program, text, answer, _)) = instantiate(t, &facts, &mut rng) else {
                        continue;
                    };
                    exercised[ti] = true;
                    report.programs += 1;
                    let oracle = oracle_execute(&program, &facts);
                    let soft = execute(&program, &rep);
                    let agree = matches!((&oracle, &soft), (Ok(a), Ok(e)) if *a == answer && e.answer() == a);
                    if !agree {
                        report.mismatches.push(format!(
                            "n={n} topology={topology} {}: {text} oracle={oracle:?} executor={:?}",
                            t.id,
                            soft.map(|e| e.distribution.answer)
                        ));
                    }
                }
            }
        }
    }
    report.templates_exercised = exercised.iter().filter(|&&e| e).count();
    report
}
