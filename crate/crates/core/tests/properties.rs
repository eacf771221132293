//! Randomized invariants over geometry, scenes, scoring, and search.

use advscene::geometry::{obb_intersects, obb_iou, ray_box_hit, OrientedBox, Point2, Ray};
use advscene::{
    adversarial_loss, ap_from_labels, apply_perturbation, aps, build_feasible_set,
    combination_probabilities, generate_scene, load_scene, match_detections, occlusion_scores,
    project, save_scene, scan, ApsConfig, CollaborationChoice, Detection, FusionMode, LossWeights,
    ModelConfig, OptimizerKind, Perturbation, SceneGenConfig, SearchBounds,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

fn arb_box() -> impl Strategy<Value = OrientedBox> {
    (
        -10.0f64..10.0,
        -10.0f64..10.0,
        -std::f64::consts::PI..std::f64::consts::PI,
        0.5f64..6.0,
        0.5f64..4.0,
    )
        .prop_map(|(x, y, yaw, l, w)| OrientedBox::from_parts(x, y, yaw, l, w))
}

/// Monte-Carlo IoU estimate by sampling the intersection of the two
/// axis-aligned bounding rectangles.
fn mc_iou(a: &OrientedBox, b: &OrientedBox, samples: u32, seed: u64) -> f64 {
    let ca: Vec<Point2> = a.corners().to_vec();
    let cb: Vec<Point2> = b.corners().to_vec();
    let lo_x = ca
        .iter()
        .map(|p| p.x)
        .fold(f64::INFINITY, f64::min)
        .max(cb.iter().map(|p| p.x).fold(f64::INFINITY, f64::min));
    let hi_x = ca
        .iter()
        .map(|p| p.x)
        .fold(f64::NEG_INFINITY, f64::max)
        .min(cb.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max));
    let lo_y = ca
        .iter()
        .map(|p| p.y)
        .fold(f64::INFINITY, f64::min)
        .max(cb.iter().map(|p| p.y).fold(f64::INFINITY, f64::min));
    let hi_y = ca
        .iter()
        .map(|p| p.y)
        .fold(f64::NEG_INFINITY, f64::max)
        .min(cb.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max));
    if lo_x >= hi_x || lo_y >= hi_y {
        return 0.0;
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut hits = 0u32;
    for _ in 0..samples {
        let p = Point2 { x: rng.gen_range(lo_x..hi_x), y: rng.gen_range(lo_y..hi_y) };
        if a.contains(p) && b.contains(p) {
            hits += 1;
        }
    }
    let inter = (hi_x - lo_x) * (hi_y - lo_y) * hits as f64 / samples as f64;
    inter / (a.area() + b.area() - inter)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn iou_is_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
        let ab = obb_iou(&a, &b);
        let ba = obb_iou(&b, &a);
        prop_assert_eq!(ab.to_bits(), ba.to_bits());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(obb_iou(&a, &a), 1.0);
    }

    #[test]
    fn iou_agrees_with_monte_carlo(a in arb_box(), b in arb_box(), seed in any::<u64>()) {
        let exact = obb_iou(&a, &b);
        let mc = mc_iou(&a, &b, 60_000, seed);
        prop_assert!((exact - mc).abs() < 0.02, "exact {} vs mc {}", exact, mc);
    }

    #[test]
    fn intersection_matches_positive_iou(a in arb_box(), b in arb_box()) {
        // Touching boxes intersect with zero overlap area, so only assert
        // the forward direction.
        if obb_iou(&a, &b) > 0.0 {
            prop_assert!(obb_intersects(&a, &b));
        }
        if !obb_intersects(&a, &b) {
            prop_assert_eq!(obb_iou(&a, &b), 0.0);
        }
    }

    #[test]
    fn ray_hits_land_on_the_boundary(
        b in arb_box(),
        ox in -30.0f64..30.0,
        oy in -30.0f64..30.0,
        angle in 0.0f64..std::f64::consts::TAU,
    ) {
        let origin = Point2 { x: ox, y: oy };
        prop_assume!(!b.contains(origin));
        let ray = Ray::from_angle(origin, angle);
        if let Some((t, p)) = ray_box_hit(&ray, &b, 200.0) {
            // The hit point must lie on the box within numeric tolerance.
            let grown = OrientedBox::new(b.center, b.length + 1e-6, b.width + 1e-6);
            prop_assert!(grown.contains(p));
            prop_assert!(t >= 0.0);
            prop_assert!((origin.dist(p) - t).abs() < 1e-9);
        }
    }

    #[test]
    fn ap_never_exceeds_one(labels in prop::collection::vec(any::<bool>(), 0..12), extra_gt in 0usize..4) {
        let n_gt = labels.iter().filter(|&&l| l).count() + extra_gt;
        let ap = ap_from_labels(&labels, n_gt);
        prop_assert!((0.0..=1.0).contains(&ap));
    }

    #[test]
    fn matching_never_double_counts(n_det in 1usize..8, n_gt in 1usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let gts: Vec<OrientedBox> = (0..n_gt)
            .map(|_| OrientedBox::from_parts(rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0), 0.0, 2.0, 2.0))
            .collect();
        let dets: Vec<Detection> = (0..n_det)
            .map(|_| Detection {
                bbox: OrientedBox::from_parts(rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0), 0.0, 2.0, 2.0),
                confidence: rng.gen_range(0.01..1.0),
            })
            .collect();
        let labels = match_detections(&dets, &gts, 0.3);
        prop_assert_eq!(labels.len(), dets.len());
        let tp = labels.iter().filter(|&&l| l).count();
        prop_assert!(tp <= n_gt);
    }
}

fn small_scene_config(n_agents: usize, n_intelligent: usize) -> SceneGenConfig {
    SceneGenConfig { n_agents, n_intelligent, n_obstacles: 3, ..SceneGenConfig::default() }
}

#[test]
fn generated_scenes_hold_their_invariants() {
    for seed in 0..200u64 {
        let config = small_scene_config(10 + (seed % 8) as usize, 3 + (seed % 3) as usize);
        let scene = generate_scene(&config, seed).unwrap();
        scene.validate().unwrap();
        assert_eq!(scene.agents.len(), config.n_agents);
        assert_eq!(scene.intelligent_ids().len(), config.n_intelligent);
        assert_eq!(scene.obstacles.len(), config.n_obstacles);
        assert_eq!(scene.seed, seed);
    }
}

#[test]
fn scene_serialization_round_trips_bit_for_bit() {
    for seed in 0..40u64 {
        let scene = generate_scene(&small_scene_config(12, 4), seed).unwrap();
        let text = save_scene(&scene);
        let loaded = load_scene(&text).unwrap();
        let again = save_scene(&loaded);
        assert_eq!(text, again, "second save differs for seed {seed}");
    }
}

#[test]
fn scans_are_deterministic_and_in_range() {
    for seed in 0..20u64 {
        let scene = generate_scene(&small_scene_config(14, 4), seed).unwrap();
        let a = scan(&scene, 0).unwrap();
        let b = scan(&scene, 0).unwrap();
        assert_eq!(a.points.len(), b.points.len());
        let ego = scene.ego().pose.position();
        for (pa, pb) in a.points.iter().zip(&b.points) {
            assert_eq!(pa.position.x.to_bits(), pb.position.x.to_bits());
            assert_eq!(pa.position.y.to_bits(), pb.position.y.to_bits());
            let sensor = scene.ego().sensor.as_ref().unwrap();
            assert!(pa.position.dist(ego) <= sensor.range_m + 1e-9);
        }
    }
}

#[test]
fn perturbation_negation_round_trips() {
    let scene = generate_scene(&small_scene_config(12, 4), 5).unwrap();
    let targets: Vec<u64> =
        scene.agents.iter().filter(|a| !a.intelligent).take(3).map(|a| a.id).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(9);
    let deltas: Vec<[f64; 3]> = targets
        .iter()
        .map(|_| [rng.gen_range(-2.5..2.5), rng.gen_range(-2.5..2.5), rng.gen_range(-0.7..0.7)])
        .collect();
    let p = Perturbation { targets: targets.clone(), deltas };
    let forward = apply_perturbation(&scene, &p).unwrap();
    let back = apply_perturbation(&forward, &p.negated()).unwrap();
    for (a, b) in scene.agents.iter().zip(&back.agents) {
        assert!((a.pose.x - b.pose.x).abs() < 1e-9);
        assert!((a.pose.y - b.pose.y).abs() < 1e-9);
    }
}

#[test]
fn occlusion_scores_cover_all_agents() {
    for seed in 0..10u64 {
        let scene = generate_scene(&small_scene_config(16, 4), seed).unwrap();
        let scores = occlusion_scores(&scene, &scene.intelligent_ids()).unwrap();
        assert_eq!(scores.len(), scene.agents.len());
    }
}

#[test]
fn feasible_sets_verify_and_project_idempotently() {
    for seed in 0..10u64 {
        let scene = generate_scene(&small_scene_config(14, 4), seed).unwrap();
        let targets: Vec<u64> =
            scene.agents.iter().filter(|a| !a.intelligent).take(3).map(|a| a.id).collect();
        let q =
            build_feasible_set(&scene, &targets, &SearchBounds::default(), 300, seed ^ 77).unwrap();
        assert!(!q.is_empty());
        for (i, e) in q.elements.iter().enumerate() {
            assert!(e.iter().all(|g| (-1.0..=1.0).contains(g)));
            assert_eq!(project(e, &q), i, "projection must fix member {i}");
            let moved = apply_perturbation(&scene, &q.denormalize(i)).unwrap();
            moved.validate().unwrap_or_else(|err| {
                panic!("element {i} of seed {seed} broke the scene: {err}")
            });
        }
    }
}

#[test]
fn softmax_temperature_limits() {
    let scene = generate_scene(&small_scene_config(12, 5), 3).unwrap();
    // Near-infinite temperature: uniform over combinations.
    let hot = combination_probabilities(&scene, 3, 1e6).unwrap();
    let n = hot.len() as f64;
    for (_, p) in &hot {
        assert!((p - 1.0 / n).abs() < 1e-6, "hot limit not uniform: {p}");
    }
    // Near-zero temperature: all mass on the weakest combination.
    let cold = combination_probabilities(&scene, 3, 1e-6).unwrap();
    let top = cold.iter().map(|(_, p)| *p).fold(f64::NEG_INFINITY, f64::max);
    assert!(top > 1.0 - 1e-9, "cold limit not concentrated: {top}");
    let total: f64 = cold.iter().map(|(_, p)| p).sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn perturbation_search_improves_and_stays_within_budget() {
    let scene = generate_scene(&small_scene_config(16, 4), 11).unwrap();
    let collab = CollaborationChoice::new(scene.intelligent_ids()[..3].to_vec());
    let model = ModelConfig::new(FusionMode::AttSurrogate);
    let weights = LossWeights::default();
    let unperturbed = adversarial_loss(&scene, &collab, &model, &weights).unwrap();
    for kind in OptimizerKind::ALL {
        let mut opt = kind.build(100);
        let cfg = ApsConfig { budget: 20, n_q: 150, ..ApsConfig::default() };
        let (best, trace) =
            aps(&scene, &collab, &model, &weights, opt.as_mut(), &cfg, 55).unwrap();
        assert!(trace.len() <= 20);
        assert!(trace.records[0].element == 0, "zero element is evaluated first");
        let bsf = trace.best_so_far();
        assert!(bsf.windows(2).all(|w| w[1] <= w[0]));
        assert!(trace.best().unwrap().l_adv <= unperturbed.l_adv + 1e-12);
        let adv = apply_perturbation(&scene, &best).unwrap();
        let rescored = adversarial_loss(&adv, &collab, &model, &weights).unwrap();
        assert!((rescored.l_adv - trace.best().unwrap().l_adv).abs() < 1e-12);
    }
}

#[test]
fn search_is_reproducible_end_to_end() {
    let scene = generate_scene(&small_scene_config(14, 4), 23).unwrap();
    let model = ModelConfig::new(FusionMode::AttSurrogate);
    let cfg = advscene::ChallengeConfig {
        aps: ApsConfig { budget: 12, n_q: 120, ..ApsConfig::default() },
        ..advscene::ChallengeConfig::default()
    };
    let a = advscene::generate_challenging(&scene, &model, &cfg, 77).unwrap();
    let b = advscene::generate_challenging(&scene, &model, &cfg, 77).unwrap();
    assert_eq!(a.collab.members, b.collab.members);
    assert_eq!(a.post_aps.l_adv.to_bits(), b.post_aps.l_adv.to_bits());
    assert_eq!(a.trace.len(), b.trace.len());
    for (ra, rb) in a.trace.records.iter().zip(&b.trace.records) {
        assert_eq!(ra.element, rb.element);
        assert_eq!(ra.l_adv.to_bits(), rb.l_adv.to_bits());
    }
}
