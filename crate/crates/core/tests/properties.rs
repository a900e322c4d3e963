mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use threatgraph::geometry::{apply_homography, distance_matrix, fit_projective};
use threatgraph::graph::{read_graph, write_graph};
use threatgraph::grouping::{affinity_from_distance, spectral_labels, ClusterCount};
use threatgraph::ingest::{parse_detection_str, serialize_detections};
use threatgraph::threat::{generic_pair_threat, pair_threat, proximity_probability, PairFeatures};
use threatgraph::tracking::TrackerState;
use threatgraph::{FloorPoint, FrameBundle, ThreatParams};

fn features() -> impl Strategy<Value = PairFeatures> {
    (0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(p_d, p_h, q_m, q_g)| PairFeatures {
        p_d,
        p_h,
        q_m,
        q_g,
    })
}

fn points() -> impl Strategy<Value = Vec<FloorPoint>> {
    proptest::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 0..9).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (x, y))| FloorPoint {
                x,
                y,
                person_id: i as u64 * 3 + 1,
                frame: 0,
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn detections_round_trip(bundles in common::bundles()) {
        let text = serialize_detections(&bundles);
        let back = parse_detection_str(&text, &common::stream()).unwrap();
        prop_assert_eq!(back, bundles);
    }

    #[test]
    fn graph_round_trip(g in common::temporal_graph()) {
        let mut buf = Vec::new();
        write_graph(&g, &mut buf).unwrap();
        let back = read_graph(buf.as_slice()).unwrap();
        prop_assert_eq!(&back, &g);
        let mut again = Vec::new();
        write_graph(&back, &mut again).unwrap();
        prop_assert_eq!(again, buf);
    }

    #[test]
    fn threat_monotone(f in features(), bump in 0.0..=1.0f64) {
        let p = ThreatParams::default();
        let base = pair_threat(&f, &p);
        prop_assert!(base >= 0.0);
        let up = |g: PairFeatures| pair_threat(&g, &p);
        let moved = up(PairFeatures { p_d: (f.p_d + bump).min(1.0), ..f });
        prop_assert!(moved >= base);
        let moved = up(PairFeatures { p_h: (f.p_h + bump).min(1.0), ..f });
        prop_assert!(moved >= base);
        let moved = up(PairFeatures { q_m: (f.q_m + bump).min(1.0), ..f });
        prop_assert!(moved <= base);
        let moved = up(PairFeatures { q_g: (f.q_g + bump).min(1.0), ..f });
        prop_assert!(moved <= base);
        prop_assert_eq!(up(PairFeatures { q_g: 1.0, ..f }), 0.0);
    }

    #[test]
    fn generic_form_matches(f in features()) {
        let p = ThreatParams::default();
        let g = generic_pair_threat(&[f.p_h, f.p_d], &[(f.q_m, 2.0), (f.q_g, 1.0)]);
        prop_assert_eq!(g, pair_threat(&f, &p));
    }

    #[test]
    fn proximity_decreases_with_distance(d in 0.0..30.0f64, extra in 0.0..10.0f64) {
        let p = ThreatParams::default();
        let (near, far) = (proximity_probability(d, &p), proximity_probability(d + extra, &p));
        prop_assert!(far <= near && near <= 1.0 && far > 0.0);
    }

    #[test]
    fn affinity_monotone_and_bounded(pts in points(), alpha in 0.01..2.0f64) {
        let dm = distance_matrix(&pts);
        let aff = affinity_from_distance(&dm, alpha);
        let n = dm.len();
        for i in 0..n {
            prop_assert_eq!(aff.a[(i, i)], 1.0);
            for j in 0..n {
                prop_assert_eq!(aff.a[(i, j)], aff.a[(j, i)]);
                prop_assert!(aff.a[(i, j)] > 0.0 && aff.a[(i, j)] <= 1.0);
                for k in 0..n {
                    if dm.d[(i, j)] < dm.d[(i, k)] {
                        prop_assert!(aff.a[(i, j)] >= aff.a[(i, k)]);
                    }
                }
            }
        }
    }

    #[test]
    fn distances_follow_permutation(pts in points(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = pts.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let (a, b) = (distance_matrix(&pts), distance_matrix(&shuffled));
        for p in &pts {
            for q in &pts {
                prop_assert_eq!(a.between(p.person_id, q.person_id), b.between(p.person_id, q.person_id));
            }
        }
    }

    #[test]
    fn clustering_is_permutation_equivariant(seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (a, _) = common::block_affinity(&mut rng, 8);
        let n = a.dim();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let b = threatgraph::linalg::SquareMatrix::from_fn(n, |i, j| a[(perm[i], perm[j])]);
        let la = spectral_labels(&a, ClusterCount::Auto);
        let lb = spectral_labels(&b, ClusterCount::Auto);
        let la_perm: Vec<usize> = perm.iter().map(|&p| la[p]).collect();
        prop_assert!(common::same_partition(&la_perm, &lb));
    }

    #[test]
    fn homography_invariant_to_image_scale(seed in any::<u64>(), s in 0.1..10.0f64) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (img, flr) = common::random_correspondence(&mut rng);
        let h = fit_projective(&img, &flr).unwrap();
        let scaled = img.map(|p| [p[0] * s, p[1] * s]);
        let hs = fit_projective(&scaled, &flr).unwrap();
        let probe = [(img[0][0] + img[2][0]) / 2.0, (img[0][1] + img[2][1]) / 2.0];
        let a = apply_homography(&h, probe).unwrap();
        let b = apply_homography(&hs, [probe[0] * s, probe[1] * s]).unwrap();
        prop_assert!((a[0] - b[0]).abs() < 1e-7 && (a[1] - b[1]).abs() < 1e-7);
    }

    #[test]
    fn tracking_is_deterministic(bundles in common::bundles()) {
        // track ids are assigned by the tracker; strip any supplied ones
        let bundles: Vec<FrameBundle> = bundles
            .into_iter()
            .map(|mut b| {
                b.persons.iter_mut().for_each(|p| p.track_id = None);
                b
            })
            .collect();
        let run = || {
            let mut st = TrackerState::new();
            let ids: Vec<_> = bundles.iter().map(|b| st.associate(b, 0.3, 25).unwrap()).collect();
            (ids, st.into_tracks())
        };
        let (a, ta) = run();
        let (b, tb) = run();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(ta, tb);
        // one distinct track per detection within a frame
        for (frame_ids, b) in a.iter().zip(&bundles) {
            let distinct: BTreeSet<u64> = frame_ids.iter().map(|x| x.track_id).collect();
            prop_assert_eq!(distinct.len(), b.persons.len());
        }
    }

    #[test]
    fn projection_invariant_under_homography_scale(seed in any::<u64>(), lambda in prop_oneof![-10.0..-0.1f64, 0.1..10.0f64]) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (img, flr) = common::random_correspondence(&mut rng);
        let h = fit_projective(&img, &flr).unwrap();
        let scaled = h.map(|row| row.map(|v| v * lambda));
        let probe = [
            img[0][0] + rng.gen::<f64>() * (img[2][0] - img[0][0]),
            img[0][1] + rng.gen::<f64>() * (img[2][1] - img[0][1]),
        ];
        let (a, b) = (apply_homography(&h, probe), apply_homography(&scaled, probe));
        if let (Ok(a), Ok(b)) = (a, b) {
            let tol = 1e-9 * (1.0 + a[0].abs().max(a[1].abs()));
            prop_assert!((a[0] - b[0]).abs() < tol && (a[1] - b[1]).abs() < tol);
        }
    }

    #[test]
    fn distances_invariant_under_rigid_motion(pts in points(), theta in -3.2..3.2f64, tx in -100.0..100.0f64, ty in -100.0..100.0f64) {
        let (s, c) = theta.sin_cos();
        let moved: Vec<FloorPoint> = pts
            .iter()
            .map(|p| FloorPoint { x: c * p.x - s * p.y + tx, y: s * p.x + c * p.y + ty, ..*p })
            .collect();
        let (a, b) = (distance_matrix(&pts), distance_matrix(&moved));
        for p in &pts {
            for q in &pts {
                let (x, y) = (a.between(p.person_id, q.person_id).unwrap(), b.between(p.person_id, q.person_id).unwrap());
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
