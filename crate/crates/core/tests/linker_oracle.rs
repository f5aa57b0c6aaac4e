mod common;

use common::{detection, oracle_link, random_instance, tube_as_oracle};
use mimebench::linker::{link_tubes, LinkerConfig};
use mimebench::pose::Detections;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn assert_matches(dets: &[mimebench::pose::Detection], threshold: f64, max_gap: usize) {
    let cfg = LinkerConfig {
        iou_threshold: threshold,
        max_gap,
    };
    let got: Vec<_> = link_tubes(&Detections::from_vec(dets.to_vec()), &cfg)
        .unwrap()
        .iter()
        .map(tube_as_oracle)
        .collect();
    let want = oracle_link(dets, threshold, max_gap);
    assert_eq!(got, want, "threshold {threshold}, max_gap {max_gap}, dets {dets:?}");
}

#[test]
fn random_small_instances_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let dets = random_instance(&mut rng, 5);
        let threshold = [0.1, 0.3, 0.5][rng.random_range(0..3)];
        let max_gap = rng.random_range(1..=4);
        assert_matches(&dets, threshold, max_gap);
    }
}

#[test]
fn two_separated_tracks() {
    let mut dets = Vec::new();
    for f in 0..5 {
        dets.push(detection(f, [0.0, 0.0, 10.0, 10.0], 0.9));
        dets.push(detection(f, [50.0, 0.0, 60.0, 10.0], 0.8));
    }
    let tubes = link_tubes(&Detections::from_vec(dets.clone()), &LinkerConfig::default()).unwrap();
    assert_eq!(tubes.len(), 2);
    assert!(tubes.iter().all(|t| t.len() == 5));
    assert_matches(&dets, 0.3, 10);
}

#[test]
fn gap_is_interpolated() {
    let dets: Vec<_> = [0, 1, 2, 5, 6]
        .iter()
        .map(|&f| detection(f, [f as f64, 0.0, f as f64 + 10.0, 10.0], 0.9))
        .collect();
    let tubes = link_tubes(&Detections::from_vec(dets.clone()), &LinkerConfig::default()).unwrap();
    assert_eq!(tubes.len(), 1);
    let t = &tubes[0];
    assert_eq!(t.frames(), (0..7).collect::<Vec<_>>());
    let interp: Vec<usize> = t.entries.iter().filter(|e| e.interpolated).map(|e| e.frame()).collect();
    assert_eq!(interp, vec![3, 4]);
    assert_eq!(t.entries[3].detection.bbox.x_min, 3.0);
    assert_eq!(t.entries[4].detection.features.as_ref().unwrap()[0], 4.0);
    assert_matches(&dets, 0.3, 10);
}

proptest! {
    #[test]
    fn detections_used_at_most_once(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dets = random_instance(&mut rng, 8);
        let tubes = link_tubes(&Detections::from_vec(dets.clone()), &LinkerConfig::default()).unwrap();
        let mut seen: Vec<usize> = tubes.iter().flat_map(|t| t.source_orders()).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..dets.len()).collect::<Vec<_>>());
        for t in &tubes {
            let f = t.frames();
            prop_assert!(f.windows(2).all(|w| w[1] == w[0] + 1));
            prop_assert!(t.entries.iter().any(|e| !e.interpolated));
        }
    }
}
