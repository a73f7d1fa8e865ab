use std::io::Cursor;

use lofi_core::csi::{self, complete, CsiPacket, CsiSequence};
use lofi_core::detection::{self, label_stream};
use lofi_core::geometry::{solve_homography, WorldPoint};
use lofi_core::pipeline::{self, PipelineOptions};
use lofi_core::simulate::{eval_labels, generate, synthetic_csi, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn short(seed: u64) -> Scenario {
    Scenario {
        duration: 10.0,
        seed,
        ..Scenario::default()
    }
}

#[test]
fn labels_match_truth_without_noise() {
    let sc = Scenario {
        duration: 100.0 / 26.0,
        ..short(1)
    };
    let sim = generate(&sc).unwrap();
    assert_eq!(sim.frames.len(), 100);
    let h = solve_homography(&sc.corner_anchors().unwrap()).unwrap();
    let labels = label_stream(&sim.frames, &h, "person");
    assert_eq!(labels.stats.labeled, 100);
    for (entry, truth) in labels.entries.iter().zip(&sim.truth.camera) {
        assert_eq!(entry.timestamp, truth.timestamp);
        assert!(entry.world.unwrap().distance(&truth.world) < 1e-6);
    }
}

#[test]
fn distractors_never_become_labels() {
    let sc = Scenario {
        distractor_probability: 1.0,
        ..short(2)
    };
    let sim = generate(&sc).unwrap();
    let h = solve_homography(&sc.corner_anchors().unwrap()).unwrap();
    let labels = label_stream(&sim.frames, &h, "person");
    let produced: Vec<_> = labels.entries.iter().map(|e| (e.timestamp, e.world.unwrap())).collect();
    assert!(eval_labels(&produced, &sim.truth).unwrap().max < 1e-6);
}

#[test]
fn completion_recovers_tenth_of_thousand_packets() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let f2 = 100.0;
    let kept: Vec<CsiPacket> = (0..1000)
        .filter(|&i| i == 0 || i == 999 || !rng.random_bool(0.1))
        .map(|i| {
            let ts = i as f64 / f2;
            CsiPacket::new(ts, -50.0, synthetic_csi(WorldPoint::new(ts * 0.1, 1.0), 52))
        })
        .collect();
    let dropped = 1000 - kept.len();
    let seq = CsiSequence::new(kept, f2, 52).unwrap();
    let (done, report) = complete(&seq).unwrap();
    assert_eq!(done.len(), 1000);
    assert_eq!(report.filled as usize, dropped);
    for (i, p) in done.packets().iter().enumerate() {
        assert!((p.timestamp - i as f64 / f2).abs() < 0.5 / f2);
    }
}

/// Pure scaling camera: ground error is the pixel noise times the scale, so the
/// radial error is Rayleigh with mean sigma * sqrt(pi / 2).
#[test]
fn pixel_noise_matches_rayleigh_oracle() {
    let scale = 0.01;
    let sigma_px = 0.12 / (scale * 2f64.sqrt());
    let sc = Scenario {
        duration: 300.0,
        homography: [scale, 0.0, 0.0, 0.0, scale, 0.0, 0.0, 0.0, 1.0],
        pixel_noise_sigma: sigma_px,
        ..short(4)
    };
    let sim = generate(&sc).unwrap();
    let h = sc.true_homography().unwrap();
    let labels = label_stream(&sim.frames, &h, "person");
    let produced: Vec<_> = labels.entries.iter().map(|e| (e.timestamp, e.world.unwrap())).collect();
    let summary = eval_labels(&produced, &sim.truth).unwrap();
    let axis = sigma_px * scale;
    let expected = axis * (std::f64::consts::PI / 2.0).sqrt();
    let se = axis * ((4.0 - std::f64::consts::PI) / 2.0).sqrt() / (summary.count as f64).sqrt();
    assert!((summary.mean - expected).abs() < 4.0 * se, "{} vs {expected}", summary.mean);
}

/// Exact only while jitter differences stay below half a period; 0.5 ms keeps
/// that beyond seven standard deviations at 100 Hz.
#[test]
fn pipeline_fills_exactly_interior_losses() {
    for (seed, jitter) in [(0, 0.0), (1, 0.0), (2, 0.0005), (3, 0.0005), (4, 0.0005)] {
        let sc = Scenario {
            loss_probability: 0.1,
            jitter_sigma: jitter,
            ..short(seed)
        };
        let sim = generate(&sc).unwrap();
        let h = solve_homography(&sc.corner_anchors().unwrap()).unwrap();
        let out = pipeline::run(&h, &sim.frames, sim.packets, &PipelineOptions::default()).unwrap();
        assert_eq!(out.report.completion.filled as usize, sim.truth.interior_dropped_packets());
        assert!(out.report.is_conserved());
    }
}

#[test]
fn files_roundtrip_through_pipeline() {
    let sc = Scenario {
        loss_probability: 0.05,
        miss_probability: 0.1,
        ..short(6)
    };
    let sim = generate(&sc).unwrap();
    let h = solve_homography(&sc.corner_anchors().unwrap()).unwrap();

    let mut det = Vec::new();
    detection::write_detections(&mut det, &sim.frames).unwrap();
    let frames = detection::read_detections(Cursor::new(det)).unwrap();
    let mut rows = Vec::new();
    csi::write_csv(&mut rows, &sim.packets, 52, false).unwrap();
    let packets = csi::read_csv(Cursor::new(rows), 52).unwrap();

    let direct = pipeline::run(&h, &sim.frames, sim.packets.clone(), &PipelineOptions::default()).unwrap();
    let via_files = pipeline::run(&h, &frames, packets, &PipelineOptions::default()).unwrap();
    assert_eq!(direct, via_files);
}
