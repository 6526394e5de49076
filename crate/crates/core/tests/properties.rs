use std::collections::BTreeSet;

use proptest::prelude::*;

use segface::classifier::{build_tables, featurize, FeatureLayout, LinearModel};
use segface::clustering::{cluster_segments, ClusterParams, Estimated};
use segface::detector::{fixture_detect, FixtureDetector, FixtureDetectorConfig, SegmentDetection};
use segface::evaluation::{confusion, f1, sweep, FrameOutcome};
use segface::pipeline::{best_proposal, detect_face, DetectionConfig, FrameInput, TrainedModel};
use segface::proposal::{generate_proposals, subset_count};
use segface::{BBox, CanonicalTable, GrayImage, KindSet, SegmentKind};

fn arb_kind() -> impl Strategy<Value = SegmentKind> {
    (0usize..SegmentKind::COUNT).prop_map(|i| SegmentKind::ALL[i])
}

fn arb_face() -> impl Strategy<Value = BBox<f64>> {
    (0.0..400.0f64, 0.0..400.0f64, 20.0..200.0f64).prop_map(|(x, y, s)| BBox::new(x, y, x + s, y + s))
}

fn arb_estimate() -> impl Strategy<Value = Estimated<f64>> {
    (arb_kind(), arb_face()).prop_map(|(kind, face)| {
        let table = CanonicalTable::default();
        let seg = table.segment_of(kind, &face);
        let est = table.estimate_full_face(kind, &seg, 1e6, 1e6).unwrap();
        (SegmentDetection::new(kind, seg), est)
    })
}

fn arb_scene() -> impl Strategy<Value = Vec<Estimated<f64>>> {
    proptest::collection::vec(arb_estimate(), 0..30)
}

fn arb_kindset() -> impl Strategy<Value = KindSet> {
    (1u16..(1 << SegmentKind::COUNT))
        .prop_map(|bits| KindSet::from_kinds(SegmentKind::ALL.iter().copied().filter(|k| bits >> k.index() & 1 == 1)))
}

fn arb_outcomes() -> impl Strategy<Value = Vec<FrameOutcome<f64>>> {
    let frame = (
        proptest::option::of(arb_face()),
        proptest::option::of((arb_face(), -3.0..3.0f64)),
    );
    proptest::collection::vec(frame, 0..60).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (gt_face, detection))| FrameOutcome {
                frame_id: i as u64,
                gt_face,
                // half the detections on face frames are placed on the face itself
                detection: match (gt_face, detection) {
                    (Some(gt), Some((_, s))) if i % 2 == 0 => Some((gt, s)),
                    (_, d) => d,
                },
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn clusters_satisfy_their_invariants(scene in arb_scene(), c in 1usize..5, r in 0.05..0.5f64) {
        let params = ClusterParams { min_size: c, radius_factor: r };
        for cl in cluster_segments(&scene, &params) {
            prop_assert!(cl.members.contains(&cl.anchor));
            prop_assert!(cl.len() >= c);
            let kinds: BTreeSet<_> = cl.members.iter().map(|&i| scene[i].0.kind).collect();
            prop_assert_eq!(kinds.len(), cl.len());
            let anchor = &scene[cl.anchor].1;
            for &m in &cl.members {
                prop_assert!(anchor.center_distance(&scene[m].1) <= cl.radius);
            }
        }
    }

    #[test]
    fn raising_c_never_adds_clusters(scene in arb_scene(), c in 1usize..5, r in 0.05..0.5f64) {
        let lo = cluster_segments(&scene, &ClusterParams { min_size: c, radius_factor: r });
        let hi = cluster_segments(&scene, &ClusterParams { min_size: c + 1, radius_factor: r });
        let lo_sets: Vec<_> = lo.iter().map(|cl| (cl.anchor, cl.members.clone())).collect();
        prop_assert!(hi.len() <= lo.len());
        for cl in &hi {
            prop_assert!(lo_sets.contains(&(cl.anchor, cl.members.clone())));
        }
    }

    #[test]
    fn raising_radius_never_drops_members(scene in arb_scene(), r in 0.05..0.5f64, extra in 0.0..0.3f64) {
        let params = |radius_factor| ClusterParams { min_size: 1, radius_factor };
        let small = cluster_segments(&scene, &params(r));
        let large = cluster_segments(&scene, &params(r + extra));
        prop_assert_eq!(small.len(), large.len());
        for (a, b) in small.iter().zip(&large) {
            prop_assert_eq!(a.anchor, b.anchor);
            prop_assert!(a.members.iter().all(|m| b.members.contains(m)));
        }
    }

    #[test]
    fn proposals_are_distinct_and_cover_members(scene in arb_scene(), zeta in 1usize..40, seed: u64) {
        let params = ClusterParams { min_size: 2, radius_factor: 0.5 };
        for cl in cluster_segments(&scene, &params) {
            let props = generate_proposals(&cl, &scene, zeta, seed).unwrap();
            let m = cl.len() - 1;
            prop_assert_eq!(props.len() as u64, subset_count(m).min(zeta as u64));
            let sets: BTreeSet<_> = props.iter().map(|p| p.members.clone()).collect();
            prop_assert_eq!(sets.len(), props.len());
            for p in &props {
                prop_assert!(p.members.contains(&cl.anchor));
                prop_assert!(p.members.len() >= 2);
                for &i in &p.members {
                    prop_assert!(p.bbox.contains(&scene[i].1.face));
                }
            }
            prop_assert_eq!(&props, &generate_proposals(&cl, &scene, zeta, seed).unwrap());
        }
    }

    #[test]
    fn features_ignore_member_order(pos in proptest::collection::vec(arb_kindset(), 1..20),
                                    neg in proptest::collection::vec(arb_kindset(), 1..20),
                                    mut kinds in proptest::collection::vec(arb_kind(), 1..14)) {
        let tables = build_tables(&pos, &neg).unwrap();
        let layout = FeatureLayout::new(&SegmentKind::ALL).unwrap();
        let a = featurize::<f64>(KindSet::from_kinds(kinds.iter().copied()), &tables, &layout).unwrap();
        kinds.reverse();
        let b = featurize::<f64>(KindSet::from_kinds(kinds.iter().copied()), &tables, &layout).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn confusion_partitions_frames(outcomes in arb_outcomes(), delta in 0.1..0.9f64) {
        let c = confusion(&outcomes, delta);
        let faces = outcomes.iter().filter(|o| o.gt_present()).count() as u64;
        let detections = outcomes.iter().filter(|o| o.detection.is_some()).count() as u64;
        prop_assert_eq!(c.tp + c.fn_, faces);
        prop_assert!(c.fp <= detections);
        prop_assert_eq!(c.tp + c.fp, detections);
        if let (Some(p), Some(r)) = (c.precision(), c.recall()) {
            if p + r > 0.0 {
                prop_assert!((f1(&c) - 2.0 * p * r / (p + r)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn roc_is_monotone(outcomes in arb_outcomes()) {
        let frames: Vec<_> = outcomes.iter().map(|o| o.scored(0.5)).collect();
        let curve = sweep(&frames);
        for w in curve.windows(2) {
            prop_assert!(w[0].theta < w[1].theta);
            prop_assert!(w[1].tpr <= w[0].tpr);
            if let (Some(a), Some(b)) = (w[0].fpr, w[1].fpr) {
                prop_assert!(b <= a);
            }
        }
    }

    #[test]
    fn zero_noise_fixture_recovers_the_face(x in 0.0..200.0f64, y in 0.0..100.0f64, s in 40.0..150.0f64, frame: u64) {
        let face = BBox::new(x, y, x + s, y + s);
        let cfg = FixtureDetectorConfig { miss_rate: 0.0, false_positive_rate: 0.0, center_jitter_sd: 0.0, ..Default::default() };
        let table = CanonicalTable::default();
        let dets = fixture_detect(&cfg, &table, &SegmentKind::ALL, Some(&face), frame, 400.0, 300.0);
        prop_assert_eq!(dets.len(), SegmentKind::COUNT);
        let tol = 1e-9 * (1.0 + x + y + s);
        for d in dets {
            let est = table.estimate_full_face(d.kind, &d.bbox, 400.0, 300.0).unwrap();
            for (a, b) in est.face.to_f64().iter().zip(face.to_f64()) {
                prop_assert!((a - b).abs() < tol, "{:?}: {:?} vs {:?}", d.kind, est.face, face);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn theta_only_gates_the_argmax(weights in proptest::collection::vec(-2.0..2.0f64, 30),
                                   bias in -1.0..1.0f64,
                                   pos in proptest::collection::vec(arb_kindset(), 1..10),
                                   neg in proptest::collection::vec(arb_kindset(), 1..10),
                                   theta in -3.0..3.0f64,
                                   frame: u64, seed: u64) {
        let model = TrainedModel {
            linear: LinearModel { weights, bias, kinds: SegmentKind::ALL.to_vec() },
            tables: build_tables(&pos, &neg).unwrap(),
        };
        let fixture = FixtureDetectorConfig { miss_rate: 0.2, false_positive_rate: 0.5, center_jitter_sd: 0.05, seed, ..Default::default() };
        let detector = FixtureDetector::new(fixture, SegmentKind::ALL.to_vec(), CanonicalTable::default()).unwrap();
        let config = DetectionConfig { downsample: 1, clahe: None, min_face: 10.0, theta, ..Default::default() };
        let image = GrayImage::filled(320, 180, 0);
        let input = FrameInput { image: &image, frame_id: frame, face_hint: Some(BBox::new(100.0, 30.0, 220.0, 150.0)) };

        let best = best_proposal(&input, &detector, &model, &config).unwrap();
        let got = detect_face(&input, &detector, &model, &config).unwrap();
        match best {
            Some(b) if b.score >= theta => prop_assert_eq!(got, Some(b)),
            _ => prop_assert_eq!(got, None),
        }
    }
}
