use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vqa3d_core::observe::{render_observation, BackgroundModel, FeatureMap};
use vqa3d_core::{azimuth_difference, sample_scene, GroundTruthScene, ObjectSpec, Pose6D, SceneConfig};
use vqa3d_parser::represent::post_filter;
use vqa3d_parser::{
    greedy_parse, refine_pose, GreedyConfig, LikelihoodModel, Parser, ParserConfig, PatchClassifier, Proposal, RefineConfig,
    Silhouette,
};

fn noiseless(scene: &GroundTruthScene) -> FeatureMap {
    render_observation(scene, 0.0, &BackgroundModel::with_sigma(0.0), 0).unwrap()
}

fn model() -> LikelihoodModel {
    LikelihoodModel::for_observation(0.0, &BackgroundModel::with_sigma(0.0))
}

fn config() -> GreedyConfig {
    GreedyConfig {
        threshold: 0.0,
        min_pixels: 8,
        min_unclaimed_fraction: 0.15,
        refine: RefineConfig::default(),
    }
}

fn exact(o: &ObjectSpec, scene: &GroundTruthScene, obs: &FeatureMap) -> Proposal {
    let mut p = Proposal::new(o.category, o.pose);
    p.subtype = Some(o.subtype);
    p.rescore(obs, &scene.camera, &model(), None);
    p
}

fn single(seed: u64) -> GroundTruthScene {
    let s = sample_scene(seed, &SceneConfig::default()).unwrap();
    GroundTruthScene::build(seed, s.camera, vec![s.objects[0].clone()]).unwrap()
}

#[test]
fn refinement_never_lowers_the_score() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let scene = sample_scene(9, &SceneConfig::default()).unwrap();
    let bg = BackgroundModel::default();
    let obs = render_observation(&scene, 0.3, &bg, 2).unwrap();
    let m = LikelihoodModel::for_observation(0.3, &bg);
    for o in &scene.objects {
        let mut pose = o.pose;
        pose.azimuth = (pose.azimuth + rng.random_range(-0.6..0.6)).rem_euclid(std::f64::consts::TAU);
        pose.location[0] += rng.random_range(-3.0..3.0);
        pose.distance *= rng.random_range(0.9..1.1);
        let mut p = Proposal::new(o.category, pose);
        p.rescore(&obs, &scene.camera, &m, None);
        let claimed: Vec<bool> = (0..obs.pixel_count()).map(|_| rng.random_bool(0.2)).collect();
        for mask in [None, Some(claimed.as_slice())] {
            let mut start = p.clone();
            start.rescore(&obs, &scene.camera, &m, mask);
            let out = refine_pose(&obs, &start, &scene.camera, &m, mask, &RefineConfig::default());
            assert!(out.gain >= start.gain, "{} < {}", out.gain, start.gain);
        }
    }
}

#[test]
fn true_pose_is_a_fixed_point() {
    for seed in 0..6 {
        let scene = single(seed);
        let obs = noiseless(&scene);
        let p = exact(&scene.objects[0], &scene, &obs);
        let out = refine_pose(&obs, &p, &scene.camera, &model(), None, &RefineConfig::default());
        assert_eq!(out.pose, p.pose, "seed {seed}");
        assert_eq!(out.gain, p.gain);
    }
}

#[test]
fn grid_start_within_fifteen_degrees_converges() {
    let grid = vqa3d_parser::PoseGrid::standard(SceneConfig::default().tilt, 5.0, 16.0);
    let mut good = 0;
    let n = 10;
    for seed in 0..n {
        let scene = single(seed);
        let obs = noiseless(&scene);
        let o = &scene.objects[0];
        let offset = if seed % 2 == 0 { 14f64 } else { -14.0 };
        let az = (o.pose.azimuth + offset.to_radians()).rem_euclid(std::f64::consts::TAU);
        let dist = grid
            .distances
            .iter()
            .copied()
            .min_by(|a, b| (a.ln() - o.pose.distance.ln()).abs().total_cmp(&(b.ln() - o.pose.distance.ln()).abs()))
            .unwrap();
        let loc = [o.pose.location[0].floor() + 0.5, o.pose.location[1].floor() + 0.5];
        let mut p = Proposal::new(o.category, Pose6D::new(az, o.pose.elevation, dist, loc));
        p.subtype = Some(o.subtype);
        p.rescore(&obs, &scene.camera, &model(), None);
        let out = refine_pose(&obs, &p, &scene.camera, &model(), None, &RefineConfig::default());
        let err = azimuth_difference(out.pose.azimuth, o.pose.azimuth).to_degrees();
        good += (err <= 2.0) as usize;
    }
    assert!(good * 10 >= n as usize * 9, "{good}/{n} within 2 degrees");
}

fn disjoint(scene: &GroundTruthScene) -> bool {
    let sils: Vec<Silhouette> = scene.objects.iter().map(|o| Silhouette::render(o.mesh(), &o.pose, &scene.camera)).collect();
    let mut seen = vec![false; scene.camera.pixel_count()];
    for s in &sils {
        for &k in &s.pixels {
            if std::mem::replace(&mut seen[k as usize], true) {
                return false;
            }
        }
    }
    true
}

#[test]
fn non_overlapping_proposals_are_all_accepted() {
    let mut checked = 0;
    for seed in 0..60 {
        let Ok(scene) = sample_scene(seed, &SceneConfig::default()) else {
            continue;
        };
        if !disjoint(&scene) {
            continue;
        }
        let obs = noiseless(&scene);
        let props: Vec<Proposal> = scene.objects.iter().map(|o| exact(o, &scene, &obs)).collect();
        let out = greedy_parse(&obs, props.clone(), &scene.camera, &model(), &config()).unwrap();
        assert!(out.rejected.is_empty(), "seed {seed}");
        let mut got: Vec<_> = out.accepted.iter().map(|p| p.pose.location).collect();
        let mut want: Vec<_> = props.iter().map(|p| p.pose.location).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, want, "seed {seed}");
        checked += 1;
    }
    assert!(checked >= 3, "only {checked} scenes without overlap");
}

#[test]
fn duplicate_proposal_is_rejected() {
    for seed in 0..5 {
        let scene = single(seed);
        let obs = noiseless(&scene);
        let p = exact(&scene.objects[0], &scene, &obs);
        let mut shifted = p.clone();
        shifted.pose.location[0] += 1.0;
        shifted.rescore(&obs, &scene.camera, &model(), None);
        let out = greedy_parse(&obs, vec![p.clone(), shifted], &scene.camera, &model(), &config()).unwrap();
        assert_eq!(out.accepted.len(), 1, "seed {seed}");
        assert_eq!(out.rejected.len(), 1);
        assert_eq!(out.accepted[0].pose, p.pose);
    }
}

#[test]
fn occluded_object_is_scored_on_its_visible_region() {
    let mut checked = 0;
    for seed in 0..80 {
        let Ok(scene) = sample_scene(seed, &SceneConfig::default()) else {
            continue;
        };
        // A pair where one object hides part of the other.
        let Some(j) = (0..scene.objects.len()).find(|&j| (0.1..0.7).contains(&scene.occlusion[j])) else {
            continue;
        };
        let pairs = scene.mesh_poses();
        let occluders: Vec<usize> = (0..pairs.len())
            .filter(|&i| i != j && pairs[i].1.distance < pairs[j].1.distance)
            .collect();
        let objects: Vec<ObjectSpec> = occluders.iter().chain([&j]).map(|&i| scene.objects[i].clone()).collect();
        let sub = GroundTruthScene::build(seed, scene.camera, objects).unwrap();
        let occludee = sub.objects.len() - 1;
        if sub.occlusion[occludee] < 0.05 || sub.occlusion[..occludee].iter().any(|&o| o > 0.0) {
            continue;
        }
        let obs = noiseless(&sub);
        let props: Vec<Proposal> = sub.objects.iter().map(|o| exact(o, &sub, &obs)).collect();
        // Occluders must come first in gain order.
        if props[..occludee].iter().any(|p| p.gain <= props[occludee].gain) {
            continue;
        }
        let out = greedy_parse(&obs, props, &sub.camera, &model(), &config()).unwrap();
        assert_eq!(out.accepted.len(), sub.objects.len(), "seed {seed}");
        let last = out.accepted.last().unwrap();
        assert_eq!(last.pose, sub.objects[occludee].pose, "seed {seed}");
        assert_eq!(last.pixels, sub.visible_pixels(occludee), "seed {seed}");
        assert!(out.trace.windows(2).all(|w| w[1] >= w[0]));
        checked += 1;
    }
    assert!(checked >= 3, "only {checked} occluding pairs");
}

#[test]
fn post_filter_drops_disagreeing_subtypes() {
    use vqa3d_core::{Category, Subtype};
    let row = |s: &str| {
        let mut r = vec![0.01; Subtype::ALL.len()];
        r[Subtype::from_name(s).unwrap().index()] = 0.9;
        r
    };
    let cats = [Category::Car, Category::Bus, Category::Plane];
    let rows = [row("sedan"), row("sedan"), row("jet")];
    assert_eq!(post_filter(&cats, &rows), [0, 2]);
}

#[test]
fn noiseless_parse_has_no_duplicates() {
    let cfg = ParserConfig {
        sigma_fg: 0.0,
        background: BackgroundModel::with_sigma(0.0),
        ..Default::default()
    };
    let parser = Parser::new(&SceneConfig::default(), cfg, PatchClassifier::for_flip_noise(0.01)).unwrap();
    for seed in 0..3 {
        let scene = sample_scene(seed, &SceneConfig::default()).unwrap();
        let out = parser.parse(&noiseless(&scene), &scene.attribute_map).unwrap();
        assert!(out.trace.windows(2).all(|w| w[1] >= w[0]));
        let sils: Vec<Vec<u32>> = out.detections.iter().map(|d| Silhouette::render(d.mesh(), &d.proposal.pose, &parser.camera).pixels).collect();
        for a in 0..sils.len() {
            for b in a + 1..sils.len() {
                let inter = sils[a].iter().filter(|k| sils[b].contains(k)).count();
                let union = sils[a].len() + sils[b].len() - inter;
                let iou = inter as f64 / union.max(1) as f64;
                let (da, db) = (&out.detections[a], &out.detections[b]);
                let occlusion_case = da.proposal.category != db.proposal.category && da.proposal.pose.distance != db.proposal.pose.distance;
                assert!(iou < 0.6 || occlusion_case, "seed {seed}: detections {a} and {b} overlap with IoU {iou}");
            }
        }
        assert_eq!(out.representation.n_objects(), out.detections.len());
    }
}
